#!/usr/bin/env python3
"""Log-log plot of |grad f| against f - f* for PowerNorm p = 2, 3, 4 and a Rayleigh run.

The fitted slopes estimate the Lojasiewicz exponent: (p - 1)/p for |x|^p and
1/2 at the nondegenerate minimizer of the Rayleigh quotient.

    python scripts/plot_exponents.py --out runs/exponents [--svg]
"""
import argparse
import sys
from pathlib import Path

from riemkl.harness import config as hc
from riemkl.harness import plotting, runner

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/exponents")
    ap.add_argument("--svg", action="store_true", help="render the figure (needs matplotlib)")
    args = ap.parse_args(argv)
    out = Path(args.out)

    traces = []
    for p in (2.0, 3.0, 4.0):
        cfg = hc.parse_config(ROOT / "configs" / "power_sweep.toml",
                              [f"objective.p={p}", f"experiment.name=power_p{int(p)}"])
        res = runner.run_experiment(cfg, out)
        print(f"p={p:g}: exponent {res.summary['exponent']:.4f} (expected {(p - 1) / p:.4f})")
        traces.append(res.trace_path)
    script = plotting.emit_plot_script(traces, "loglog", out / "power_loglog.py", f_star=0.0)
    print(f"script: {script}")

    cfg = hc.parse_config(ROOT / "configs" / "rayleigh_s9.toml")
    res = runner.run_experiment(cfg, out)
    f_star = res.summary["constants"]["f_star"]
    print(f"rayleigh: exponent {res.summary['exponent']:.4f} (expected 0.5)")
    rscript = plotting.emit_plot_script([res.trace_path], "loglog", out / "rayleigh_loglog.py", f_star=f_star,
                                        decades=cfg.diagnostics.exponent_decades)
    print(f"script: {rscript}")

    if args.svg:
        for s in (script, rscript):
            print(f"svg: {plotting.render_svg(s, s.with_suffix('.svg'))}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
