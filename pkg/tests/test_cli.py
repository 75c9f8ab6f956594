import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from riemkl import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
QUAD = str(CONFIGS / "quadratic_armijo.toml")


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def assert_single_error(err, kind):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith(f"riemkl: error[{kind}]: ")


def test_run_writes_outputs(capsys, tmp_path):
    code, out, err = run_cli(capsys, "run", "--config", QUAD, "--out", str(tmp_path))
    assert code == 0 and err == ""
    assert (tmp_path / "quadratic_armijo.trace.csv").is_file()
    s = json.loads((tmp_path / "quadratic_armijo.summary.json").read_text())
    assert s["status"] == "converged" and "status=converged" in out


def test_out_dir_precedence(capsys, tmp_path, monkeypatch):
    env_dir, flag_dir = tmp_path / "env", tmp_path / "flag"
    monkeypatch.setenv("RIEMKL_OUT_DIR", str(env_dir))
    assert run_cli(capsys, "run", "--config", QUAD)[0] == 0
    assert (env_dir / "quadratic_armijo.trace.csv").is_file()
    assert run_cli(capsys, "run", "--config", QUAD, "--out", str(flag_dir))[0] == 0
    assert (flag_dir / "quadratic_armijo.trace.csv").is_file()


def test_seed_and_set(capsys, tmp_path):
    cfg = str(CONFIGS / "rayleigh_s9.toml")
    for seed in (1, 2):
        assert run_cli(capsys, "run", "--config", cfg, "--out", str(tmp_path / str(seed)), "--seed", str(seed),
                       "--set", "experiment.name=r")[0] == 0
    a, b = (tmp_path / "1" / "r.trace.csv").read_bytes(), (tmp_path / "2" / "r.trace.csv").read_bytes()
    assert a != b
    assert json.loads((tmp_path / "1" / "r.summary.json").read_text())["seed"] == 1


def test_config_error_exit(capsys, tmp_path):
    code, _, err = run_cli(capsys, "run", "--config", QUAD, "--set", "solver.alpha=3", "--set", "manifold.dim=5",
                           "--out", str(tmp_path))
    assert code == 2
    assert_single_error(err, "config")
    assert "solver.alpha" in err and "objective.Q" in err


def test_missing_config_exit(capsys, tmp_path):
    code, _, err = run_cli(capsys, "run", "--config", str(tmp_path / "nope.toml"))
    assert code == 2
    assert_single_error(err, "config")


def test_usage_error_exit(capsys):
    code, _, err = run_cli(capsys, "frobnicate")
    assert code == 2
    assert_single_error(err, "usage")
    code, _, err = run_cli(capsys, "run")
    assert code == 2
    assert_single_error(err, "usage")


def test_solver_failure_exit(capsys, tmp_path):
    code, _, err = run_cli(capsys, "run", "--config", QUAD, "--set", "solver.max_halvings=0",
                           "--set", "solver.alpha=0.99", "--out", str(tmp_path))
    assert code == 3
    assert_single_error(err, "solver")
    # the failed run still leaves its outputs behind
    assert (tmp_path / "quadratic_armijo.summary.json").is_file()


def test_io_errors_exit(capsys, tmp_path):
    code, _, err = run_cli(capsys, "diagnose", "--trace", str(tmp_path / "none.csv"))
    assert code == 4
    assert_single_error(err, "io")
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    code, _, err = run_cli(capsys, "diagnose", "--trace", str(bad))
    assert code == 4
    assert_single_error(err, "io")
    code, _, err = run_cli(capsys, "plot", "--trace", str(tmp_path / "none.csv"))
    assert code == 4
    assert_single_error(err, "io")


def test_diagnose_with_new_constants(capsys, tmp_path):
    run_cli(capsys, "run", "--config", QUAD, "--out", str(tmp_path))
    trace = str(tmp_path / "quadratic_armijo.trace.csv")
    code, out, _ = run_cli(capsys, "diagnose", "--trace", trace, "--set", "a=0.5", "--set", "f_star=0")
    assert code == 0
    rep = json.loads(out)
    assert rep["a"] == 0.5 and rep["diagnostics"]["h1"]["pass"] is True
    assert rep["diagnostics"]["h2"]["pass"] is None and rep["b"] is None
    code, out, _ = run_cli(capsys, "diagnose", "--trace", trace, "--set", "a=1e6")
    assert json.loads(out)["diagnostics"]["h1"]["pass"] is False
    code, out, _ = run_cli(capsys, "diagnose", "--trace", trace, "--config", QUAD,
                           "--set", "phi_c=3", "--set", "eta=1")
    rep = json.loads(out)
    assert code == 0 and rep["b"] is not None
    assert rep["diagnostics"]["h1"]["pass"] and rep["diagnostics"]["h2"]["pass"]
    assert rep["diagnostics"]["lemma52"]["certificate"]["provenance"] == "assumed"
    report = tmp_path / "rep.json"
    assert run_cli(capsys, "diagnose", "--trace", trace, "--out", str(report))[0] == 0
    assert json.loads(report.read_text())["trace"] == trace


def test_diagnose_bad_set(capsys, tmp_path):
    run_cli(capsys, "run", "--config", QUAD, "--out", str(tmp_path))
    trace = str(tmp_path / "quadratic_armijo.trace.csv")
    for item in ("zeta=1", "a=x", "a"):
        code, _, err = run_cli(capsys, "diagnose", "--trace", trace, "--set", item)
        assert code == 2
        assert_single_error(err, "config")


def test_sweep_cli(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "sweep", "--config", str(CONFIGS / "armijo_alpha_sweep.toml"),
                           "--out", str(tmp_path))
    assert code == 0 and "3 cells, 0 failed" in out
    assert (tmp_path / "armijo_alpha_sweep.sweep.csv").is_file()


def test_plot_cli(capsys, tmp_path):
    pytest.importorskip("matplotlib")
    run_cli(capsys, "run", "--config", QUAD, "--out", str(tmp_path))
    trace = str(tmp_path / "quadratic_armijo.trace.csv")
    code, out, _ = run_cli(capsys, "plot", "--trace", trace, "--kind", "cumqd", "--out", str(tmp_path), "--svg")
    assert code == 0
    assert (tmp_path / "plot_cumqd.py").is_file() and (tmp_path / "plot_cumqd.svg").is_file()
    code, _, err = run_cli(capsys, "plot")
    assert code == 2
    assert_single_error(err, "config")


def test_console_entry_point(tmp_path):
    env = dict(os.environ, RIEMKL_OUT_DIR=str(tmp_path))
    ok = subprocess.run([sys.executable, "-m", "riemkl.cli", "run", "--config", QUAD], capture_output=True,
                        text=True, env=env)
    assert ok.returncode == 0, ok.stderr
    bad = subprocess.run([sys.executable, "-m", "riemkl.cli", "run", "--config", QUAD, "--set", "solver.alpha=2"],
                         capture_output=True, text=True, env=env)
    assert bad.returncode == 2
    assert_single_error(bad.stderr, "config")
