import json

import pytest

from pmcflow import cli
from pmcflow import scenarios as sc
from pmcflow.errors import ParseError, ValidationError

SMALL_FLOW = """
name = "tiny"
kind = "flow"

[chart]
type = "minkowski"
n = 1

[grid]
nodes = 65
r_max = 6.0

[initial]
type = "hyperboloid"
tau0 = 1.0
bump_amplitude = 0.05

[prescribed]
type = "oracle"

[flow]
integrator = "rkc"
s_end = 0.5
dt_max = 0.01
record_every = 2
delta_floor = 1e-3

[diagnostics]
snapshot_every = 10

[checks]
completed = true
gradient_identity = { tol = 1e-2 }
"""


@pytest.mark.parametrize("name", sc.list_presets())
def test_presets_parse(name):
    cfg = sc.load_preset(name)
    assert cfg.name == name
    assert cfg.kind in sc.KINDS


def test_unknown_key_reports_line():
    text = SMALL_FLOW.replace('bump_amplitude = 0.05', 'bump_amplitude = 0.05\nviscosity = 2')
    with pytest.raises(ParseError, match=r"\[initial\] 'viscosity' \(line 17\)"):
        sc.parse_config_text(text)
    with pytest.raises(ParseError, match="unknown key 'bogus'"):
        sc.parse_config_text("bogus = 1\n" + SMALL_FLOW)
    with pytest.raises(ParseError):
        sc.parse_config_text(SMALL_FLOW + "\n[weird]\nx = 1\n")
    with pytest.raises(ParseError, match="invalid TOML"):
        sc.parse_config_text("name = ")


@pytest.mark.parametrize(
    "old,new,msg",
    [
        ("tau0 = 1.0", "tau0 = -1.0", "tau0 must be positive"),
        ("nodes = 65", "nodes = 5", "nodes must be an integer"),
        ('kind = "flow"', 'kind = "dance"', "kind must be one of"),
        ('integrator = "rkc"', 'integrator = "magic"', "integrator must be one of"),
        ("r_max = 6.0", "r_max = 0.1", "r_max must exceed"),
        ("completed = true", "newton = true", "does not apply"),
        ("completed = true", "barrier = true", "needs diagnostics.barrier_lower"),
        ("completed = true", "drift = {}", "checks.drift.tol is required"),
    ],
)
def test_validation_errors(old, new, msg):
    with pytest.raises(ValidationError, match=msg):
        sc.parse_config_text(SMALL_FLOW.replace(old, new))


def test_load_preset_overrides():
    cfg = sc.load_preset("mink-perturbed-cmc", **{"grid.nodes": 65, "flow.s_end": 0.2})
    assert cfg["grid"]["nodes"] == 65 and cfg["flow"]["s_end"] == 0.2
    with pytest.raises(ParseError):
        sc.load_preset("mink-perturbed-cmc", **{"grid.colour": 1})
    with pytest.raises(ValidationError):
        sc.load_preset("no-such-preset")


def test_bump_is_truncated():
    import numpy as np

    r = np.array([0.0, 1.0, 7.0])
    b = sc.bump(r, 0.1, 1.0)
    assert b[0] == 0.1 and b[2] == 0.0


def test_flow_run_artifacts(tmp_path):
    cfg = sc.parse_config_text(SMALL_FLOW)
    summary = sc.run_scenario(cfg, tmp_path)
    assert summary.passed and summary.exit_code == 0
    data = json.loads((tmp_path / "tiny.summary.json").read_text())
    for key in ("termination", "s_final", "sup_h_minus_h_final", "decay_rate", "checks"):
        assert key in data
    assert set(data["checks"]["completed"]) >= {"pass", "margin"}
    header = (tmp_path / "tiny.series.csv").read_text().splitlines()[0]
    assert header.startswith("s,sup_H_minus_h")
    snaps = sorted(tmp_path.glob("tiny.state.*.json"))
    assert snaps
    st = json.loads(snaps[0].read_text())
    assert st["grid"]["nodes_per_axis"] == 65 and len(st["w"]) == 65


def test_flow_run_is_deterministic(tmp_path):
    cfg = sc.parse_config_text(SMALL_FLOW)
    sc.run_scenario(cfg, tmp_path / "a")
    sc.run_scenario(sc.parse_config_text(SMALL_FLOW), tmp_path / "b")
    assert (tmp_path / "a" / "tiny.series.csv").read_bytes() == (tmp_path / "b" / "tiny.series.csv").read_bytes()


def test_failing_check_sets_exit_code(tmp_path):
    cfg = sc.parse_config_text(SMALL_FLOW.replace("completed = true", "drift = { tol = 1e-12 }"))
    summary = sc.run_scenario(cfg, tmp_path)
    assert summary.termination == "completed"
    assert not summary.passed and summary.exit_code == 1


@pytest.mark.parametrize("name", ["foliation-hyperboloid", "foliation-tanh", "schw-expansion", "stationary-bump"])
def test_small_presets_pass(tmp_path, name):
    summary = sc.run_scenario(sc.load_preset(name), tmp_path)
    assert summary.passed, summary.checks
    assert any(p.endswith(".summary.json") for p in summary.artifacts)


def test_foliation_window_error_is_reported(tmp_path):
    cfg = sc.load_preset("foliation-hyperboloid", **{"foliation.t_end": 10.0})
    summary = sc.run_scenario(cfg, tmp_path)
    assert summary.termination == "window_error" and summary.exit_code == 1


def test_cli_run_and_exit_codes(tmp_path, capsys):
    path = tmp_path / "tiny.toml"
    path.write_text(SMALL_FLOW)
    assert cli.main(["run", str(path), "--out", str(tmp_path / "out")]) == 0
    assert "tiny: completed" in capsys.readouterr().out
    bad = tmp_path / "bad.toml"
    bad.write_text(SMALL_FLOW.replace("completed = true", "drift = { tol = 1e-12 }"))
    assert cli.main(["run", str(bad), "--out", str(tmp_path / "out")]) == 1
    broken = tmp_path / "broken.toml"
    broken.write_text(SMALL_FLOW + "\n[flow]\n")
    assert cli.main(["run", str(broken)]) == 2
    assert "error [parse_error]" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.toml")]) == 2


def test_cli_preset_scenarios_and_verify(tmp_path, capsys):
    assert cli.main(["run", "schw-expansion", "--out", str(tmp_path)]) == 0
    assert cli.main(["scenarios"]) == 0
    out = capsys.readouterr().out
    for name in sc.list_presets():
        assert name in out
    assert cli.main(["verify", "--filter", "tilt", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert set(data) == {"tilt-equivalence", "tilt-boost-norm"}
