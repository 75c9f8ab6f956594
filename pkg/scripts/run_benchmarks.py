#!/usr/bin/env python3
"""Run every shipped config (and its sweep grid, if any) and print a one-line summary per run.

    python scripts/run_benchmarks.py --out runs/bench --workers 2
"""
import argparse
import sys
import time
from pathlib import Path

from riemkl.harness import config as hc
from riemkl.harness import runner

ROOT = Path(__file__).resolve().parents[1]
FAILED = ("error", "config-error", "subproblem-failure")


def fmt_verdicts(v):
    return " ".join(f"{k}={'-' if x is None else x}" for k, x in v.items())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--configs", default=str(ROOT / "configs"), help="directory of TOML configs")
    ap.add_argument("--out", default="runs/bench")
    ap.add_argument("--workers", type=int, default=1, help="process pool size for sweeps")
    ap.add_argument("--no-sweeps", action="store_true")
    args = ap.parse_args(argv)

    out = Path(args.out)
    failed = 0
    t0 = time.perf_counter()
    for path in sorted(Path(args.configs).glob("*.toml")):
        cfg = hc.parse_config(path)
        res = runner.run_experiment(cfg, out)
        s = res.summary
        failed += res.failed
        exp = s.get("exponent")
        print(f"{cfg.name:22s} {s['status']:18s} it={s['iterations']:5d} f={s['final_f']:+.10e} "
              f"|g|={s['final_grad_norm']:.1e} exp={'-' if exp is None else f'{exp:.3f}'} "
              f"{fmt_verdicts(s['verdicts'])}")
        if cfg.sweep and not args.no_sweeps:
            table, rows = runner.sweep(cfg, out_dir=out, workers=args.workers)
            bad = sum(r.get("status") in FAILED for r in rows)
            capped = sum(r.get("status") == "max-iters" for r in rows)
            failed += bad
            print(f"{'':22s} sweep: {len(rows)} cells, {bad} failed, {capped} at max-iters -> {table}")
    print(f"done in {time.perf_counter() - t0:.1f}s, outputs in {out}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
