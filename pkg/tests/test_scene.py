import math

import pytest
from hypothesis import given, strategies as st

from uavsec.errors import ConfigError, DomainError
from uavsec.scene import MobilityPolicy, NodeSpec, Position3D, distance, elevation_angle, position_at, validate_mobility

coord = st.floats(-5000, 5000, allow_nan=False)
height = st.floats(0, 500, allow_nan=False)
positions = st.builds(Position3D, coord, coord, height)


def node(id, pos, **mob):
    return NodeSpec(id=id, role="user", initial_position=pos, mobility=MobilityPolicy(**mob))


def test_static_node_stays_put():
    bs = NodeSpec(id="bs", role="base_station", initial_position=[0, 0, 30], tx_power_dbm=43)
    assert position_at(bs, [bs], 57.0) == Position3D(0, 0, 30)


def test_linear_user_reaches_first_eavesdropper():
    ue = node("ue", [0, 0, 0], kind="linear", velocity=(10, 0, 0))
    assert position_at(ue, [ue], 25.0) == Position3D(250, 0, 0)


def test_follow_applies_offset():
    ue = node("ue", [300, 0, 0])
    uav = NodeSpec(id="uav", role="uav_relay", initial_position=[0, 0, 0], tx_power_dbm=23,
                   mobility=MobilityPolicy(kind="follow", target="ue", offset=(0, 0, 20)))
    assert position_at(uav, [ue, uav], 3.0) == Position3D(300, 0, 20)


def test_follow_clamps_height_at_ground():
    ue = node("ue", [0, 0, 5])
    f = node("f", [0, 0, 0], kind="follow", target="ue", offset=(0, 0, -20))
    assert position_at(f, [ue, f], 0.0).z == 0.0


def test_missing_target_and_cycle_rejected():
    a = node("a", [0, 0, 0], kind="follow", target="b")
    with pytest.raises(ConfigError):
        validate_mobility([a])
    b = node("b", [0, 0, 0], kind="follow", target="c")
    c = node("c", [0, 0, 0], kind="follow", target="a")
    with pytest.raises(ConfigError, match="cycle"):
        validate_mobility([a, b, c])
    with pytest.raises(ConfigError):
        position_at(a, [a, b, c], 1.0)


def test_negative_time_rejected():
    ue = node("ue", [0, 0, 0])
    with pytest.raises(DomainError):
        position_at(ue, [ue], -1.0)


def test_position_invariants():
    with pytest.raises(DomainError):
        Position3D(0, 0, -1)
    with pytest.raises(DomainError):
        Position3D(math.nan, 0, 0)


def test_distance_examples():
    assert distance(Position3D(0, 0, 0), Position3D(0, 0, 0)) == 0
    assert distance(Position3D(0, 0, 30), Position3D(250, 0, 0)) == pytest.approx(251.794, abs=5e-4)


@pytest.mark.parametrize("ground,aerial,expected", [
    (Position3D(0, 0, 0), Position3D(20, 0, 20), 45.0),
    (Position3D(7, 3, 0), Position3D(7, 3, 40), 90.0),
    (Position3D(250, 0, 0), Position3D(0, 0, 30), 6.843),
])
def test_elevation_examples(ground, aerial, expected):
    assert elevation_angle(ground, aerial) == pytest.approx(expected, abs=5e-4)


def test_elevation_requires_aerial_above():
    with pytest.raises(DomainError):
        elevation_angle(Position3D(0, 0, 30), Position3D(10, 0, 30))


@given(positions, positions)
def test_distance_symmetric(a, b):
    assert distance(a, b) == distance(b, a)
    assert (distance(a, b) == 0) == (a == b)


@given(positions, positions, positions)
def test_triangle_inequality(a, b, c):
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9


@given(st.tuples(coord, coord, st.floats(0, 10)), st.floats(0, 100), st.floats(0, 100))
def test_linear_additivity(v, t1, t2):
    ue = node("ue", [0, 0, 0], kind="linear", velocity=v)
    p1 = position_at(ue, [ue], t1)
    p2 = position_at(ue, [ue], t1 + t2)
    for a, b, vi in zip(p1, p2, v):
        assert b - a == pytest.approx(vi * t2, abs=1e-9 * max(1.0, abs(vi) * (t1 + t2)))


@given(st.floats(0, 200), st.tuples(st.floats(-50, 50), st.floats(-50, 50), st.floats(0, 50)))
def test_follow_keeps_offset(t, off):
    ue = node("ue", [0, 0, 0], kind="linear", velocity=(10, -3, 0))
    f = node("f", [0, 0, 0], kind="follow", target="ue", offset=off)
    roster = [ue, f]
    pu, pf = position_at(ue, roster, t), position_at(f, roster, t)
    assert (pf.x - pu.x, pf.y - pu.y, pf.z - pu.z) == pytest.approx(off, abs=1e-9)
    assert position_at(f, roster, t) == pf
