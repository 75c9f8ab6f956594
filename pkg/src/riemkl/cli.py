"""Command line entry point: ``riemkl {run,sweep,diagnose,plot}``.

Every failure prints one line ``riemkl: error[<kind>]: <message>`` to stderr
and exits with 2 (config), 3 (solver) or 4 (I/O).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import diagnostics as dg
from .harness import config as hc
from .harness import io as hio
from .harness import plotting, runner

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
OUT_ENV = "RIEMKL_OUT_DIR"


class CLIError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind, self.code = kind, code


def _out_dir(args, cfg=None):
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    return Path(cfg.experiment.out_dir) if cfg is not None else Path(".")


def _load(args):
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"experiment.seed={args.seed}")
    return hc.parse_config(args.config, overrides)


def cmd_run(args):
    cfg = _load(args)
    res = runner.run_experiment(cfg, _out_dir(args, cfg))
    s = res.summary
    print(f"{cfg.name}: status={s['status']} iterations={s['iterations']} final_f={s['final_f']:.12g} "
          f"|grad|={s['final_grad_norm']:.3e}")
    print(f"trace: {res.trace_path}")
    print(f"summary: {res.summary_path}")
    if res.failed:
        raise CLIError("solver", f"{cfg.name}: {s['status']}: {s['message']}", EXIT_SOLVER)


def cmd_sweep(args):
    cfg = _load(args)
    path, rows = runner.sweep(cfg, out_dir=_out_dir(args, cfg), workers=args.workers)
    bad = sum(r.get("status") in ("error", "config-error", "subproblem-failure") for r in rows)
    print(f"{cfg.name}: {len(rows)} cells, {bad} failed")
    print(f"table: {path}")


_DIAG_KEYS = ("a", "b", "f_star", "phi_c", "phi_theta", "eta", "rho")


def cmd_diagnose(args):
    if not Path(args.trace).is_file():
        raise CLIError("io", f"trace not found: {args.trace}", EXIT_IO)
    try:
        trace = hio.read_trace_csv(args.trace)
    except ValueError as exc:
        raise CLIError("io", str(exc), EXIT_IO) from None
    vals = {}
    for item in args.set or []:
        key, _, text = item.partition("=")
        if key not in _DIAG_KEYS or not text:
            raise CLIError("config", f"--set {item}: expected one of {','.join(_DIAG_KEYS)} with a value", EXIT_CONFIG)
        try:
            vals[key] = float(text)
        except ValueError:
            raise CLIError("config", f"--set {item}: not a number", EXIT_CONFIG) from None
    a, b, f_star = vals.get("a"), vals.get("b"), vals.get("f_star")
    if args.config:
        # --set carries monitor constants here, so only the seed overrides the config
        cfg = hc.parse_config(args.config, [] if args.seed is None else [f"experiment.seed={args.seed}"])
        problem = runner.build_problem(cfg)
        L = None if cfg.solver.method == "prox-inexact" else runner.lipschitz_for(problem)
        solver = cfg.solver
        if solver.method == "sd-fixed" and solver.lipschitz is None:
            solver.lipschitz = L
        a0, b0 = dg.constructive_constants(solver, problem.qdist, trace, L)
        a = a0 if a is None else a
        b = b0 if b is None else b
        if f_star is None:
            f_star = dg.default_f_star(problem.objective, trace, solver.grad_tol, L)
    if f_star is None:
        f_star = dg.default_f_star(None, trace, 0.0, None)
    cert = None
    if "phi_c" in vals:
        try:
            cert = dg.KLCertificate(vals["phi_c"], vals.get("phi_theta", 0.5), vals.get("rho", math.inf),
                                    vals.get("eta", math.inf), "assumed")
        except dg.DiagnosticsError as exc:
            raise CLIError("config", str(exc), EXIT_CONFIG) from None
    report = {"trace": str(args.trace), "a": a, "b": b, "f_star": f_star,
              "diagnostics": dg.diagnose(trace, a, b, f_star, cert).to_dict()}
    if args.out:
        hio.write_json(report, args.out)
        print(f"report: {args.out}")
    else:
        print(json.dumps(hio._jsonable(report), indent=2, sort_keys=True))


def cmd_plot(args):
    traces = args.trace or []
    if not traces:
        raise CLIError("config", "plot needs at least one --trace", EXIT_CONFIG)
    for t in traces:
        if not Path(t).is_file():
            raise CLIError("io", f"trace not found: {t}", EXIT_IO)
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, ".")) / f"plot_{args.kind}.py"
    if out.suffix != ".py":
        out = out / f"plot_{args.kind}.py"
    script = plotting.emit_plot_script(traces, args.kind, out, args.f_star, args.decades)
    print(f"script: {script}")
    if args.svg:
        try:
            svg = plotting.render_svg(script, script.with_suffix(".svg"))
        except RuntimeError as exc:
            raise CLIError("io", str(exc), EXIT_IO) from None
        print(f"svg: {svg}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError("usage", message, EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="riemkl", description="Riemannian descent experiments with KL diagnostics.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="TOML experiment config")
        sp.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
        sp.add_argument("--seed", type=int, help="overrides experiment.seed")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override, repeatable")

    sp = sub.add_parser("run", help="run one experiment")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run the [sweep] grid of a config")
    common(sp)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("diagnose", help="re-run monitors on a trace CSV with new constants")
    common(sp, config_required=False)
    sp.add_argument("--trace", required=True)
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("plot", help="emit a plotting script for trace CSVs")
    sp.add_argument("--trace", action="append", help="trace CSV, repeatable")
    sp.add_argument("--kind", choices=plotting.PLOT_KINDS, default="fgap")
    sp.add_argument("--out", help="script path (.py) or directory")
    sp.add_argument("--f-star", dest="f_star", type=float)
    sp.add_argument("--decades", type=float, default=1.0, help="tail window of the log-log slope fit")
    sp.add_argument("--svg", action="store_true", help="also render an SVG next to the script")
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except CLIError as exc:
        _fail(exc.kind, str(exc))
        return exc.code
    except hc.ConfigError as exc:
        _fail("config", str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _fail("io", str(exc))
        return EXIT_IO
    except Exception as exc:  # anything else is a solver-side failure
        _fail("solver", f"{type(exc).__name__}: {exc}")
        return EXIT_SOLVER
    return EXIT_OK


def _fail(kind, message):
    line = " ".join(str(message).split())
    print(f"riemkl: error[{kind}]: {line}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
