import csv
import json
import subprocess
import sys

import numpy as np
import pytest

import oracles
from conftest import variant
from uavsec.cli import main


@pytest.fixture
def small_scenario(tmp_path, scenario_a):
    cfg = variant(scenario_a, duration_s=1.0, channel__fading_samples_per_step=20)
    p = tmp_path / "small.json"
    p.write_text(cfg.to_json())
    return p


def test_simulate_writes_outputs(tmp_path, small_scenario, capsys):
    out = tmp_path / "out"
    assert main(["simulate", "--scenario", str(small_scenario), "--seed", "5", "--out", str(out)]) == 0
    rows = list(csv.reader((out / "records.csv").open()))
    assert len(rows) == 12
    assert json.loads((out / "summary.json").read_text())["seed"] == 5
    assert "records.csv" in capsys.readouterr().out


def test_simulate_fading_off_json(tmp_path, small_scenario):
    out = tmp_path / "o"
    assert main(["simulate", "--scenario", str(small_scenario), "--out", str(out), "--format", "json",
                 "--fading", "off"]) == 0
    assert json.loads((out / "effective_config.json").read_text())["channel"]["fading_enabled"] is False


def test_exit_code_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x", "duration_s": 1, "nodes": [], "oops": 1}')
    assert main(["simulate", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err


def test_exit_code_missing_file(tmp_path):
    assert main(["simulate", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 4


def test_exit_code_numeric(tmp_path, scenario_a):
    cfg = variant(scenario_a, duration_s=0.1, channel__fading_samples_per_step=5, noise__noise_power_w=1e-320)
    p = tmp_path / "tiny.json"
    p.write_text(cfg.to_json())
    with np.errstate(all="ignore"):
        assert main(["simulate", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 3


def test_exit_code_unwritable_output(tmp_path, small_scenario):
    blocker = tmp_path / "f"
    blocker.write_text("")
    assert main(["simulate", "--scenario", str(small_scenario), "--out", str(blocker / "x")]) == 4


def test_localize_from_csv(tmp_path, capsys):
    sensors = np.array([[0, 0, 10], [1000, 0, 150], [1000, 1000, 10], [0, 1000, 150], [500, 500, 60]], float)
    rss = 45.0 - oracles._model_loss(np.array([[420.0, 610.0, 35.0]]), sensors)[0]
    p = tmp_path / "rss.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "rss_dbm"])
        w.writerows([[*s, r] for s, r in zip(sensors, rss)])
    assert main(["localize", "--input", str(p), "--bounds", "0,0,0,1000,1000,100"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert np.allclose(out["position"], [420, 610, 35], atol=0.1)
    assert out["est_tx_power_dbm"] == pytest.approx(45.0, abs=0.01)


def test_localize_too_few_rows(tmp_path):
    p = tmp_path / "rss.csv"
    p.write_text("x,y,z,rss_dbm\n0,0,0,-50\n1,0,0,-51\n")
    assert main(["localize", "--input", str(p), "--bounds", "0,0,0,10,10,10"]) == 2


def test_sweep_table(tmp_path, small_scenario):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--scenario", str(small_scenario), "--param", "nodes.relay.mobility.offset.2",
                 "--values", "10,20,40", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["seed"] for r in rows] == ["1", "2", "3"]
    assert main(["sweep", "--scenario", str(small_scenario), "--param", "name", "--values", "1"]) == 2


def test_module_entry_point(tmp_path, small_scenario):
    proc = subprocess.run([sys.executable, "-m", "uavsec", "simulate", "--scenario", str(small_scenario),
                           "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
