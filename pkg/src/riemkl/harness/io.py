"""Trace CSV, summary JSON and sweep tables, all written atomically."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from ..solvers import DescentTrace

TRACE_HEADER = ("iter", "f", "grad_norm", "step", "qd_step", "dist_step", "w_norm", "cum_qd")


def fmt(v) -> str:
    """17 significant digits, so a reload reproduces the double exactly."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def trace_to_csv(trace: DescentTrace) -> str:
    """One row per move plus a terminal row holding the final state (step columns nan)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    cum = trace.cum_qd
    for k in range(trace.n_iter):
        w.writerow([k] + [fmt(v) for v in (trace.f[k], trace.grad_norm[k], trace.step[k], trace.qd_step[k],
                                           trace.dist_step[k], trace.w_norm[k], cum[k])])
    total = float(cum[-1]) if trace.n_iter else 0.0
    nan = math.nan
    w.writerow([trace.n_iter] + [fmt(v) for v in (trace.final_f, trace.final_grad_norm, nan, nan, nan, nan, total)])
    return buf.getvalue()


def write_trace_csv(trace: DescentTrace, path) -> Path:
    return atomic_write(path, trace_to_csv(trace))


def read_trace_csv(path, method: str = "unknown") -> DescentTrace:
    """Rebuild a trace from its CSV; status is not stored there and comes back as 'unknown'."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise ValueError(f"{path}: not a trace CSV (header must be {','.join(TRACE_HEADER)})")
    if len(rows) < 2:
        raise ValueError(f"{path}: trace has no terminal row")
    data = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float).reshape(-1, len(TRACE_HEADER) - 1)
    body, last = data[:-1], data[-1]
    cols = {name: body[:, i].copy() for i, name in enumerate(TRACE_HEADER[1:-1])}
    return DescentTrace(method, **cols, final_f=float(last[0]), final_grad_norm=float(last[1]), status="unknown")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no nan/inf; keep them readable as strings
        return v if math.isfinite(v) else str(v)
    return obj


def write_json(obj, path) -> Path:
    return atomic_write(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_table(columns, rows, path) -> Path:
    """CSV table with the given column order; missing cells are left empty."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row.get(c)) for c in columns])
    return atomic_write(path, buf.getvalue())


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
