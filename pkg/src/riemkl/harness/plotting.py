"""Standalone matplotlib scripts for trace CSVs, plus optional direct SVG rendering."""
from __future__ import annotations

import os
import subprocess
import sys
from pathlib import Path

from .io import atomic_write

PLOT_KINDS = ("fgap", "loglog", "cumqd")

_TEMPLATE = '''#!/usr/bin/env python3
"""{title}

Usage: python {script_name} [output.svg|output.png]
Without an argument the figure is shown interactively.
"""
import csv
import sys
from pathlib import Path

import matplotlib
if len(sys.argv) > 1:
    matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent
TRACES = {traces!r}
KIND = {kind!r}
F_STAR = {f_star!r}
DECADES = {decades!r}


def load(rel):
    with open(HERE / rel, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {{k: np.array([float(r[k]) for r in rows]) for k in rows[0]}}


def tail_slope(x, y, min_points=10):
    # least squares over the trailing DECADES of x, ignoring gaps at rounding level
    ok = x > 1e-12
    lx, ly = np.log10(x[ok]), np.log10(y[ok])
    if lx.size < 2:
        return float("nan")
    inside = lx <= lx[-1] + DECADES
    n = int(np.argmin(inside[::-1])) if not inside.all() else inside.size
    n = min(max(n, min_points), lx.size)
    return np.polyfit(lx[-n:], ly[-n:], 1)[0]


fig, ax = plt.subplots(figsize=(6, 4))
for rel in TRACES:
    t = load(rel)
    label = Path(rel).name.replace(".trace.csv", "")
    f_ref = F_STAR if F_STAR is not None else t["f"].min()
    gap = t["f"] - f_ref
    if KIND == "fgap":
        ok = gap > 0
        ax.semilogy(t["iter"][ok], gap[ok], label=label)
        ax.set_xlabel("iteration")
        ax.set_ylabel("f - f*")
    elif KIND == "loglog":
        ok = (gap > 0) & (t["grad_norm"] > 0)
        x, y = gap[ok], t["grad_norm"][ok]
        slope = tail_slope(x, y)
        ax.loglog(x, y, ".-", label=f"{{label}} (slope {{slope:.3f}})")
        ax.set_xlabel("f - f*")
        ax.set_ylabel("|grad f|")
        ax.invert_xaxis()
    else:
        ax.plot(t["iter"], t["cum_qd"], label=label)
        ax.set_xlabel("iteration")
        ax.set_ylabel("sum of D-steps")
ax.grid(True, which="both", alpha=0.3)
ax.legend()
fig.tight_layout()
if len(sys.argv) > 1:
    fig.savefig(sys.argv[1])
else:
    plt.show()
'''

_TITLES = {
    "fgap": "Objective gap f - f* per iteration, semilog.",
    "loglog": "Gradient norm against objective gap, log-log; the slope is the Lojasiewicz exponent.",
    "cumqd": "Cumulative quasi-distance steps per iteration.",
}


def emit_plot_script(trace_paths, kind: str, script_path, f_star: float | None = None,
                     decades: float = 1.0) -> Path:
    """Write a standalone plotting script that overlays every trace in ``trace_paths``.

    Traces are referenced relative to the script's own directory, so the
    script and its CSVs can be moved together. ``decades`` sets the tail
    window of the slope shown by the log-log kind.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    paths = [Path(p) for p in trace_paths]
    if not paths:
        raise ValueError("no traces to plot")
    for p in paths:
        if not p.is_file():
            raise FileNotFoundError(f"trace not found: {p}")
    script_path = Path(script_path)
    here = script_path.resolve().parent
    rel = [Path(os.path.relpath(p.resolve(), here)).as_posix() for p in paths]
    text = _TEMPLATE.format(title=_TITLES[kind], script_name=script_path.name, traces=rel, kind=kind,
                            f_star=None if f_star is None else float(f_star), decades=float(decades))
    atomic_write(script_path, text)
    script_path.chmod(0o755)
    return script_path


def render_svg(script_path, svg_path) -> Path:
    """Run an emitted script headlessly to produce an SVG; needs matplotlib."""
    svg_path = Path(svg_path)
    svg_path.parent.mkdir(parents=True, exist_ok=True)
    proc = subprocess.run([sys.executable, str(script_path), str(svg_path)], capture_output=True, text=True)
    if proc.returncode != 0:
        last = (proc.stderr.strip().splitlines() or ["unknown error"])[-1]
        raise RuntimeError(f"plot rendering failed: {last}")
    return svg_path
