import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from uavsec.channel import ChannelParams
from uavsec.detectloc import (
    MetricWindow,
    RssMeasurement,
    detect_centralized,
    detect_distributed,
    identify_uplink_aggressor,
    rss_localize,
)
from uavsec.errors import DomainError
from uavsec.scene import Position3D

P = ChannelParams()


def win(node, *vals):
    return MetricWindow(node, tuple(vals))


def test_centralized_examples():
    assert detect_centralized([win("a", -10.0)], -5.0).flagged == ("a",)
    assert detect_centralized([win("a", 3.0), win("b", 9.0)], -5.0).flagged == ()
    assert detect_centralized([win("a", -5.0)], -5.0).flagged == ()


def test_window_mean_uses_tail():
    w = MetricWindow("a", tuple([100.0] * 5 + [0.0] * 10), window_len=10)
    assert w.mean() == 0.0
    with pytest.raises(DomainError):
        MetricWindow("a", ())
    with pytest.raises(DomainError):
        MetricWindow("a", (1.0, math.nan))


def test_distributed_examples():
    same = [win(f"n{i}", 4.0) for i in range(5)]
    assert detect_distributed(same).flagged == ()
    rng = np.random.default_rng(0)
    peers = [win(f"n{i}", float(v)) for i, v in enumerate(rng.uniform(10, 11, 9))]
    assert detect_distributed(peers + [win("victim", -10.0)]).flagged == ("victim",)
    with pytest.raises(DomainError):
        detect_distributed(same[:2])


@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=3), st.floats(-30, 30), min_size=3, max_size=12),
       st.floats(0.5, 5), st.randoms(use_true_random=False))
def test_detectors_match_oracle_and_ignore_order(means, k, rnd):
    windows = [win(n, v) for n, v in means.items()]
    shuffled = list(windows)
    rnd.shuffle(shuffled)
    d1, d2 = detect_distributed(windows, k), detect_distributed(shuffled, k)
    assert list(d1.flagged) == oracles.distributed_rule(means, k)
    assert d1.flagged == d2.flagged
    c1, c2 = detect_centralized(windows, 0.0), detect_centralized(shuffled, 0.0)
    assert c1.flagged == c2.flagged == tuple(sorted(n for n, v in means.items() if v < 0.0))


def synth(source, sensors, p_dbm):
    sensors = np.asarray(sensors, float)
    loss = oracles._model_loss(np.asarray([source], float), sensors)[0]
    return [RssMeasurement(Position3D(*s), float(p_dbm - l)) for s, l in zip(sensors, loss)]


SENSORS5 = [[0, -400, 30], [1000, -400, 120], [1000, 400, 30], [0, 400, 120], [500, 0, 80]]
BOUNDS5 = (0, -500, 0, 1000, 500, 100)


def test_localize_jammer_example():
    meas = synth((500, 0, 0), SENSORS5, 45.0)
    est = rss_localize(meas, P, BOUNDS5)
    assert math.dist(tuple(est.position), (500, 0, 0)) < 0.5
    assert est.est_tx_power_dbm == pytest.approx(45.0, abs=0.05)
    assert est.residual <= est.coarse_residual
    assert est.residual >= 0
    assert est.bounds_limited  # the source sits on the floor of the box


def test_localize_agrees_with_grid_oracle():
    meas = synth((312.0, 47.0, 23.0), SENSORS5, 30.0)
    est = rss_localize(meas, P, BOUNDS5)
    ref, _ = oracles.exhaustive_grid_localize(np.array(SENSORS5, float), [m.rss_dbm for m in meas], BOUNDS5)
    assert np.max(np.abs(np.array(tuple(est.position)) - ref)) <= 2.0
    assert not est.bounds_limited


@settings(max_examples=6, deadline=None)
@given(st.floats(50, 950), st.floats(-450, 450), st.floats(5, 95), st.floats(0, 50))
def test_localize_noiseless_recovers_source(x, y, z, p):
    est = rss_localize(synth((x, y, z), SENSORS5, p), P, BOUNDS5)
    assert math.dist(tuple(est.position), (x, y, z)) <= 0.1


def test_localize_noise_regression():
    rng = np.random.default_rng(2024)
    diag = math.dist(BOUNDS5[:3], BOUNDS5[3:])
    errs = []
    for _ in range(100):
        src = rng.uniform([50, -450, 5], [950, 450, 95])
        clean = synth(src, SENSORS5, 30.0)
        noisy = [RssMeasurement(m.sensor, m.rss_dbm + rng.normal(0, 1.0)) for m in clean]
        est = rss_localize(noisy, P, BOUNDS5, grid_cells=32)
        errs.append(math.dist(tuple(est.position), src))
    assert np.median(errs) < 0.05 * diag


def test_localize_errors():
    meas = synth((500, 0, 0), SENSORS5, 45.0)
    with pytest.raises(DomainError):
        rss_localize(meas[:3], P, BOUNDS5)
    line = [RssMeasurement(Position3D(10.0 * i, 0, 0), -60.0) for i in range(5)]
    with pytest.raises(DomainError):
        rss_localize(line, P, BOUNDS5)
    with pytest.raises(DomainError):
        rss_localize(meas, P, (0, 0, 0, -1, 1, 1))


RBS = 20


def levels(hot, base=-100.0, boost=20.0):
    return [base + (boost if i in hot else 0.0) for i in range(RBS)]


def test_aggressor_examples():
    reports = {"bs1": levels({0, 1, 2}), "bs2": levels({0, 1, 2})}
    r = identify_uplink_aggressor(reports, {"uav": [0, 1, 2]})
    assert r.uav_id == "uav" and r.confidence_db == pytest.approx(20.0)
    flat = {"bs1": [-100.0] * RBS}
    assert identify_uplink_aggressor(flat, {"uav": [0, 1]}).uav_id is None
    mixed = {"bs1": [-100 + (10 if i < 2 else 4 if i in (5, 6) else 0) for i in range(RBS)]}
    r = identify_uplink_aggressor(mixed, {"a": [0, 1], "b": [5, 6]})
    assert r.uav_id == "a"


def test_aggressor_errors():
    with pytest.raises(DomainError):
        identify_uplink_aggressor({"bs1": [-100.0] * RBS}, {})
    with pytest.raises(DomainError):
        identify_uplink_aggressor({}, {"u": [1]})


@given(st.lists(st.floats(-120, -60), min_size=RBS, max_size=RBS), st.sets(st.integers(0, RBS - 1), min_size=1,
                                                                          max_size=RBS - 1))
def test_aggressor_floor(lv, rbs):
    r = identify_uplink_aggressor({"bs": lv}, {"u": sorted(rbs)})
    if r.uav_id is not None:
        assert r.contrasts[r.uav_id] > 3.0
