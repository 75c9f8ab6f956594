"""Build problems from configs, run them, and sweep parameter grids."""
from __future__ import annotations

import dataclasses
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import diagnostics as dg
from ..manifolds import GeometryError, Manifold, Sphere, make_manifold
from ..objectives import (EuclideanQuadratic, KarcherSPD, Objective, PowerNorm, RayleighSphere,
                          hessian_spectrum, lipschitz_estimate, random_symmetric)
from ..quasimetric import QuasiDistance
from ..solvers import SUBPROBLEM_FAILURE, DescentTrace, SolverConfig, SolverError, solve
from .config import ConfigError, ExperimentConfig, apply_overrides, config_from_dict
from .io import write_json, write_table, write_trace_csv

# near-critical threshold for building a Morse certificate at the limit point
CERT_GRAD_TOL = 1e-4
SWEEP_COLUMNS = ("status", "iterations", "final_f", "final_grad_norm", "sum_qd", "mean_step",
                 "h1_pass", "h2_pass", "summability_ratio", "is_cauchy", "lemma52_first_valid_k",
                 "exponent", "oracle_distance", "error")


@dataclass
class Problem:
    manifold: Manifold
    objective: Objective
    qdist: QuasiDistance
    x0: np.ndarray
    seeds: dict


@dataclass
class RunResult:
    trace: DescentTrace
    summary: dict
    trace_path: Path
    summary_path: Path

    @property
    def failed(self) -> bool:
        return self.trace.status in (SUBPROBLEM_FAILURE, "error")


def _seeds(seed: int) -> dict:
    # independent streams so that e.g. a new x0 does not change the instance
    names = ("instance", "x0", "lipschitz", "certificate")
    return dict(zip(names, np.random.SeedSequence(seed).spawn(len(names))))


def build_problem(cfg: ExperimentConfig) -> Problem:
    seeds = _seeds(cfg.experiment.seed)
    rng = np.random.default_rng(seeds["instance"])
    o, n = cfg.objective, cfg.manifold.dim
    if o.kind == "quadratic":
        if o.random:
            B = rng.standard_normal((n, n))
            obj = EuclideanQuadratic(B @ B.T / n + 0.1 * np.eye(n), rng.standard_normal(n))
        else:
            obj = EuclideanQuadratic(o.Q, o.center)
    elif o.kind == "power":
        obj = PowerNorm(n, o.p)
    elif o.kind == "rayleigh":
        obj = RayleighSphere(random_symmetric(n, rng) if o.random else o.A)
    elif o.kind == "karcher":
        M = make_manifold("spd", n)
        anchors = [M.random_point(rng) for _ in range(o.n_anchors)] if o.random else o.anchors
        obj = KarcherSPD(anchors, o.weights)
    else:
        raise ConfigError([f"objective.kind: unknown objective {o.kind!r}"])
    M = obj.manifold
    q = cfg.quasidistance
    qdist = QuasiDistance(M, q.kind, q.scale, q.w_plus, q.w_minus)
    if o.x0 is not None:
        x0 = np.asarray(o.x0, dtype=float)
        if isinstance(M, Sphere):
            x0 = x0 / np.linalg.norm(x0)
        M.validate_point(x0)
    else:
        x0 = M.random_point(np.random.default_rng(seeds["x0"]))
    return Problem(M, obj, qdist, x0, seeds)


def lipschitz_for(problem: Problem, n_samples: int = 200) -> float:
    """Analytic constant, or a seeded estimate on a ball around x0 covering the descent region."""
    obj, M = problem.objective, problem.manifold
    if obj.lipschitz is not None:
        return float(obj.lipschitz)
    if isinstance(M, Sphere):
        radius = math.pi
    else:
        d = obj.oracle_distance(problem.x0)
        radius = 2.0 * max(1.0, d if d is not None else 1.0)
    return lipschitz_estimate(obj, center=problem.x0, radius=radius, n_samples=n_samples,
                              seed=np.random.default_rng(problem.seeds["lipschitz"]))


def certificate_for(cfg: ExperimentConfig, problem: Problem, trace: DescentTrace, L: float | None = None):
    """KL certificate requested by ``diagnostics.certificate``; returns (cert, note).

    The noncritical certificate uses the Lipschitz-repaired radius when ``L`` is known.
    """
    kind = cfg.diagnostics.certificate
    obj = problem.objective
    if kind == "none":
        return None, None
    if kind == "noncritical":
        try:
            return dg.noncritical_certificate(obj, problem.x0, L), None
        except dg.DiagnosticsError as exc:
            return None, str(exc)
    mins = obj.minimizers()
    xf = trace.final_point
    if not mins or xf is None or trace.final_grad_norm > CERT_GRAD_TOL:
        return None, "no near-critical limit point with a known minimizer"
    xbar = min(mins, key=lambda m: float(problem.manifold.dist(xf, m)))
    try:
        eig = hessian_spectrum(obj, xbar)
        if np.min(np.abs(eig)) <= 1e-8 * max(1.0, np.max(np.abs(eig))):
            raise dg.DiagnosticsError("degenerate critical point: Hessian has a zero eigenvalue")
        cert = dg.certify_morse(obj, xbar, radius=cfg.diagnostics.cert_radius,
                                n_samples=cfg.diagnostics.cert_samples,
                                seed=np.random.default_rng(problem.seeds["certificate"]))
        return cert, None
    except dg.DiagnosticsError as exc:
        return None, str(exc)


def _empty_trace(method, x0, obj, message) -> DescentTrace:
    e = np.zeros(0)
    fx = obj.value(x0)
    return DescentTrace(method, e, e, e, e, e, e, final_f=fx, final_grad_norm=obj.grad_norm(x0),
                        status="error", final_point=x0, message=message)


def analyze(cfg: ExperimentConfig, problem: Problem, trace: DescentTrace) -> dict:
    """Diagnostics block of the run summary."""
    diag = cfg.diagnostics
    monitors = diag.monitors()
    out: dict = {}
    solver = dataclasses.replace(cfg.solver)
    L = None
    if solver.method != "prox-inexact":
        L = lipschitz_for(problem, diag.lipschitz_samples)
        if solver.lipschitz is None and solver.method == "sd-fixed":
            solver.lipschitz = L
    a = b = None
    if trace.n_iter:
        a, b = dg.constructive_constants(solver, problem.qdist, trace, L)
    f_star = dg.default_f_star(problem.objective, trace, solver.grad_tol, L)
    cert, note = (None, None)
    if "lemma52" in monitors:
        cert, note = certificate_for(cfg, problem, trace, L)
    f_ref = cert.f_center if cert is not None and cert.f_center is not None else f_star
    rep = dg.diagnose(trace, a, b, f_star, None, monitors, diag.exponent_decades)
    if "lemma52" in monitors:
        rep2 = dg.diagnose(trace, a, b, f_ref, cert, ("lemma52",))
        rep.lemma52 = rep2.lemma52
        if cert is None and note:
            rep.lemma52 = {"skipped": note}
    out["constants"] = {"a": a, "b": b, "lipschitz": L, "f_star": f_star}
    out["diagnostics"] = rep.to_dict()
    return out


def _verdicts(diag: dict) -> dict:
    v = {}
    if "h1" in diag:
        v["h1"] = diag["h1"].get("pass")
    if "h2" in diag:
        v["h2"] = diag["h2"].get("pass")
    if "summability" in diag:
        v["summability"] = diag["summability"].get("is_cauchy")
    if "lemma52" in diag:
        v["lemma52_first_valid_k"] = diag["lemma52"].get("first_valid_k")
    if "lemma51" in diag:
        v["lemma51"] = diag["lemma51"].get("pass")
    return v


def output_dir(cfg: ExperimentConfig, out_dir=None) -> Path:
    return Path(out_dir if out_dir is not None else cfg.experiment.out_dir)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Run one configured experiment and write ``<name>.trace.csv`` and ``<name>.summary.json``.

    Solver failures end up in the summary status; the partial trace is still written.
    """
    problem = build_problem(cfg)
    solver = dataclasses.replace(cfg.solver)
    if solver.method == "sd-fixed" and solver.lipschitz is None:
        solver.lipschitz = lipschitz_for(problem, cfg.diagnostics.lipschitz_samples)
    t0 = time.perf_counter()
    try:
        trace = solve(problem.manifold, problem.objective, problem.x0, solver, problem.qdist)
    except (SolverError, GeometryError, ValueError, FloatingPointError) as exc:
        trace = _empty_trace(solver.method, problem.x0, problem.objective, f"{type(exc).__name__}: {exc}")
    wall = time.perf_counter() - t0

    obj = problem.objective
    summary = {
        "name": cfg.name,
        "status": trace.status,
        "message": trace.message,
        "method": solver.method,
        "manifold": dataclasses.asdict(problem.manifold.descriptor),
        "objective": obj.name,
        "quasidistance": repr(problem.qdist),
        "seed": cfg.experiment.seed,
        "iterations": trace.n_iter,
        "final_f": trace.final_f,
        "final_grad_norm": trace.final_grad_norm,
        "wall_time": wall,
        "sum_qd": float(trace.qd_step.sum()),
        "mean_step": float(trace.step.mean()) if trace.n_iter else None,
        "oracle_distance": obj.oracle_distance(trace.final_point) if trace.final_point is not None else None,
    }
    if isinstance(obj, RayleighSphere) and trace.final_point is not None:
        summary["eigenvector_alignment"] = obj.eigenvector_alignment(trace.final_point)
    try:
        summary.update(analyze(cfg, problem, trace))
    except (dg.DiagnosticsError, GeometryError, ValueError) as exc:
        summary["diagnostics"] = {"error": f"{type(exc).__name__}: {exc}"}
    diag = summary.get("diagnostics", {})
    summary["verdicts"] = _verdicts(diag)
    if "exponent" in diag:
        summary["exponent"] = diag["exponent"].get("alpha")

    out = output_dir(cfg, out_dir)
    trace_path = write_trace_csv(trace, out / f"{cfg.name}.trace.csv")
    summary_path = write_json(summary, out / f"{cfg.name}.summary.json")
    return RunResult(trace, summary, trace_path, summary_path)


def summary_row(summary: dict) -> dict:
    v = summary.get("verdicts", {})
    diag = summary.get("diagnostics", {})
    return {
        "status": summary["status"],
        "iterations": summary["iterations"],
        "final_f": summary["final_f"],
        "final_grad_norm": summary["final_grad_norm"],
        "sum_qd": summary["sum_qd"],
        "mean_step": summary["mean_step"],
        "h1_pass": v.get("h1"),
        "h2_pass": v.get("h2"),
        "summability_ratio": diag.get("summability", {}).get("ratio"),
        "is_cauchy": v.get("summability"),
        "lemma52_first_valid_k": v.get("lemma52_first_valid_k"),
        "exponent": summary.get("exponent"),
        "oracle_distance": summary.get("oracle_distance"),
        "error": summary["message"] if summary["status"] == "error" else None,
    }


def grid_cells(grid: dict) -> list[dict]:
    """Cartesian product over sorted keys, each key's values in listed order."""
    keys = sorted(grid)
    if not keys or any(len(grid[k]) == 0 for k in keys):
        return []
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _run_cell(args):
    raw, cell, name, cell_dir = args
    row = dict(cell)
    try:
        raw = apply_overrides(raw, cell)
        raw.setdefault("experiment", {})["name"] = name
        cfg = config_from_dict(raw)
        row.update(summary_row(run_experiment(cfg, cell_dir).summary))
    except ConfigError as exc:
        row.update(status="config-error", error=str(exc))
    except Exception as exc:  # keep sweeping; the failure is recorded in the row
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return row


def _base_raw(cfg: ExperimentConfig) -> dict:
    raw = cfg.to_dict()
    raw.pop("sweep", None)
    return raw


def sweep(cfg: ExperimentConfig, grid: dict | None = None, out_dir=None, workers: int = 1):
    """Run every grid cell and write ``<name>.sweep.csv``; returns (path, rows).

    Grid keys are dotted config paths such as ``"solver.alpha"``. Cells run in
    a process pool when ``workers > 1``; rows always follow the grid order.
    """
    grid = cfg.sweep if grid is None else grid
    keys = sorted(grid)
    cells = grid_cells(grid)
    out = output_dir(cfg, out_dir)
    base = _base_raw(cfg)
    jobs = [(base, cell, f"{cfg.name}-{i:03d}", str(out / "cells")) for i, cell in enumerate(cells)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, jobs))
    else:
        rows = [_run_cell(j) for j in jobs]
    path = write_table(list(keys) + list(SWEEP_COLUMNS), rows, out / f"{cfg.name}.sweep.csv")
    return path, rows
