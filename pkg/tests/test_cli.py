import json
import os
import shutil
import subprocess
import sys

import pytest

from pkslab import cli

SMALL_FV = {
    "experiment": "simulate2d",
    "params": {
        "solver": {"n_cells": 120, "R_max": 20.0, "core": 0.5, "T_end": 0.2, "cadence": 0.02, "dt_max": 2e-3},
        "cases": [{"name": "g", "M": 12.566370614359172, "initial": {"kind": "gaussian", "sigma": 1.0},
                   "checks": [{"check": "virial", "t_max": 0.2, "rtol": 0.05}, {"check": "energy_monotone"}]}],
    },
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(cfg if isinstance(cfg, str) else json.dumps(cfg))
    return p


def _run(tmp_path, experiment, cfg, *extra, out="out"):
    path = _write(tmp_path, cfg)
    return cli.main([experiment, "--config", str(path), "--out", str(tmp_path / out), "--quiet", *extra])


def test_success_bundle_and_claim_sources(tmp_path):
    assert _run(tmp_path, "simulate2d", SMALL_FV) == cli.EXIT_OK
    out = tmp_path / "out"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] and summary["config"]["experiment"] == "simulate2d"
    assert set(summary["versions"]) >= {"pkslab", "numpy", "scipy", "python"}
    for c in summary["claims"]:
        assert (out / c["source"]).exists() or c["source"] == "summary.json"
        assert c["method"]
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".out")]


def test_invalid_json_and_schema_are_input_errors(tmp_path):
    assert _run(tmp_path, "zeta", "{not json") == cli.EXIT_INPUT
    assert _run(tmp_path, "zeta", {"experiment": "zeta", "params": {}, "colour": 1}) == cli.EXIT_INPUT
    bad_case = json.loads(json.dumps(SMALL_FV))
    bad_case["params"]["cases"][0]["initial"] = {"kind": "gaussian"}
    assert _run(tmp_path, "simulate2d", bad_case) == cli.EXIT_INPUT
    assert _run(tmp_path, "jko", SMALL_FV) == cli.EXIT_INPUT
    assert not (tmp_path / "out").exists()


def test_missing_config_file(tmp_path):
    assert cli.main(["zeta", "--config", str(tmp_path / "nope.json"), "--quiet"]) == cli.EXIT_INPUT


def test_unknown_check_is_input_error_and_leaves_nothing(tmp_path):
    cfg = json.loads(json.dumps(SMALL_FV))
    cfg["params"]["cases"][0]["checks"] = [{"check": "telepathy"}]
    assert _run(tmp_path, "simulate2d", cfg) == cli.EXIT_INPUT
    assert list(tmp_path.iterdir()) == [tmp_path / "cfg.json"]


def test_failed_claim_is_scientific_failure(tmp_path):
    cfg = {"experiment": "shoot", "params": {"a_values": [50.0], "halving": False, "expect_components": {"50": 7}}}
    assert _run(tmp_path, "shoot", cfg) == cli.EXIT_SCIENCE
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert not summary["passed"]


def test_numerical_breakdown_removes_partial_output(tmp_path):
    cfg = {"experiment": "gelfand", "params": {"masses": [12.0], "tol": 1e-30,
                                               "grid": {"kind": "graded", "n": 40, "R_max": 10.0}}}
    assert _run(tmp_path, "gelfand", cfg) == cli.EXIT_SCIENCE
    assert not (tmp_path / "out").exists()
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".out")]


def test_rerun_replaces_bundle(tmp_path):
    assert _run(tmp_path, "simulate2d", SMALL_FV) == 0
    (tmp_path / "out" / "stale.txt").write_text("x")
    assert _run(tmp_path, "simulate2d", SMALL_FV) == 0
    assert not (tmp_path / "out" / "stale.txt").exists()


def _strip_clock(obj):
    if isinstance(obj, dict):
        return {k: _strip_clock(v) for k, v in obj.items() if k != "wall_time"}
    return obj


def test_deterministic_runs_are_byte_identical(tmp_path):
    assert _run(tmp_path, "simulate2d", SMALL_FV, "--deterministic", out="a") == 0
    assert _run(tmp_path, "simulate2d", SMALL_FV, "--deterministic", out="b") == 0
    a, b = tmp_path / "a", tmp_path / "b"
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        if name != "summary.json":
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
    sa, sb = (json.loads((d / "summary.json").read_text()) for d in (a, b))
    assert _strip_clock(sa) == _strip_clock(sb)


def test_seed_override_changes_corpus(tmp_path):
    cfg = {"experiment": "inequalities", "seed": 1,
           "params": {"n": 4, "equality": {"lams": [1.0], "grid": {"kind": "graded", "n": 1000, "R_max": 1e4,
                                                                     "core": 0.25}}}}
    _run(tmp_path, "inequalities", cfg, out="s1")
    _run(tmp_path, "inequalities", cfg, "--seed", "2", out="s2")
    a = (tmp_path / "s1" / "corpus_gaps.csv").read_text()
    b = (tmp_path / "s2" / "corpus_gaps.csv").read_text()
    assert a != b
    assert json.loads((tmp_path / "s2" / "summary.json").read_text())["seed"] == 2


def test_empty_sweep_exits_zero(tmp_path):
    cfg = {"experiment": "sweep", "params": {"base": SMALL_FV, "grid": {"params.cases.0.M": []}}}
    assert _run(tmp_path, "sweep", cfg) == cli.EXIT_OK
    assert (tmp_path / "out" / "sweep.csv").read_text().splitlines() == ["point,params.cases.0.M,exit_code"]


def test_sweep_parallel_matches_sequential(tmp_path):
    base = json.loads(json.dumps(SMALL_FV))
    base["params"]["cases"][0]["checks"] = []
    cfg = {"experiment": "sweep", "params": {"base": base, "grid": {"params.cases.0.M": [6.0, 30.0]},
                                             "collect": ["results.g.verdict.detected"], "workers": 2}}
    assert _run(tmp_path, "sweep", cfg, out="par") == 0
    assert _run(tmp_path, "sweep", cfg, "--deterministic", out="seq") == 0
    par = (tmp_path / "par" / "sweep.csv").read_text()
    assert par == (tmp_path / "seq" / "sweep.csv").read_text()
    assert len(par.splitlines()) == 3


def test_set_threads(monkeypatch):
    for v in cli.THREAD_VARS:
        monkeypatch.delenv(v, raising=False)
    monkeypatch.setenv("PKS_LAB_THREADS", "3")
    cli.set_threads(False)
    assert os.environ["OMP_NUM_THREADS"] == "3"
    cli.set_threads(True)
    assert all(os.environ[v] == "1" for v in cli.THREAD_VARS)


def test_console_script_help():
    exe = shutil.which("pks-lab")
    cmd = [exe] if exe else [sys.executable, "-m", "pkslab.cli"]
    res = subprocess.run(cmd + ["--help"], capture_output=True, text=True, timeout=60)
    assert res.returncode == 0 and "experiment" in res.stdout


@pytest.mark.parametrize("name", ["c1_virial", "c4_stationarity", "c7_porous_medium", "c8_shooting"])
def test_acceptance_configs_validate(name):
    from pkslab.acceptance import CONFIG_DIR
    cli.load_config(CONFIG_DIR / f"{name}.json")
