import json
import subprocess
import sys

import pytest

from collarcap import cli

SMALL = ["--weight-samples", "20000"]


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path), *SMALL])


def test_cap_census_k2(tmp_path):
    assert run(tmp_path, "cap", "--k", "2") == 0
    census = json.loads((tmp_path / "census.json").read_text())
    assert census["elliptic"] == 3
    lines = (tmp_path / "census.csv").read_text().splitlines()
    assert lines[0] == "cap_id,x,y,hess1,hess2,class"
    assert json.loads((tmp_path / "cap_model.json").read_text())


def test_invalid_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"surface": {"epsilon": 0.5}}))
    assert run(tmp_path, "construct", "--config", str(cfg)) == 2
    err = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert err["error"] == "invalid_config"


def test_unknown_config_key_exits_2(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"orbit": {"steps": 10}}))
    assert run(tmp_path, "orbit", "--config", str(cfg)) == 2


def test_construct_report(tmp_path):
    assert run(tmp_path, "construct", "--surface", "torus") == 0
    rep = json.loads((tmp_path / "assembly_report.json").read_text())
    assert rep["report"]["caps"] == 2


def test_orbit_csv(tmp_path):
    assert run(tmp_path, "orbit", "--n", "50", "--point", "0.3", "0.2") == 0
    lines = (tmp_path / "orbit.csv").read_text().splitlines()
    assert lines[0] == "step,chart,x,y,label"
    assert len(lines) == 52


def test_ftle_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(d, "ftle", "--samples", "40", "--n", "200", "--grid", "16", "--seed", "5") == 0
    for name in ("ftle.csv", "ftle.ppm"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ja, jb = (json.loads((d / "ftle.json").read_text()) for d in (a, b))
    for j in (ja, jb):
        del j["config"]["out"]
    assert ja == jb
    assert (a / "ftle.ppm").read_bytes().startswith(b"P6\n16 16\n255\n")
    summary = json.loads((a / "ftle.json").read_text())
    assert abs(summary["stochastic_median"] - summary["oracle"]) < 0.05


def test_verify_quick_exit_zero(tmp_path):
    assert run(tmp_path, "verify", "--scale", "quick") == 0
    rep = json.loads((tmp_path / "verify_report.json").read_text())
    assert rep["passed"] and all(c["passed"] for c in rep["checks"])


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "collarcap.cli", "cap", "--k", "3", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stdout + out.stderr
    assert json.loads((tmp_path / "census.json").read_text())["elliptic"] == 4
