"""Experiment configuration: TOML files with one section per component."""
from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from ..manifolds import MANIFOLDS
from ..quasimetric import VARIANTS
from ..solvers import SolverConfig

OBJECTIVE_KINDS = {"quadratic": "euclidean", "power": "euclidean", "rayleigh": "sphere", "karcher": "spd"}
CERTIFICATES = ("auto", "morse", "noncritical", "none")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem with its field path."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ManifoldSpec:
    kind: str = "euclidean"
    dim: int = 2


@dataclass
class ObjectiveSpec:
    kind: str = "quadratic"
    random: bool = False
    Q: list | None = None
    center: list | None = None
    p: float = 2.0
    A: list | None = None
    anchors: list | None = None
    weights: list | None = None
    n_anchors: int = 2
    x0: list | None = None


@dataclass
class QuasiDistanceSpec:
    kind: str = "riemannian"
    scale: float = 1.0
    w_plus: list | float | None = None
    w_minus: list | float | None = None


@dataclass
class DiagnosticsSpec:
    h1: bool = True
    h2: bool = True
    summability: bool = True
    exponent: bool = True
    lemma52: bool = True
    lemma51: bool = True
    certificate: str = "auto"
    cert_radius: float = 1.0
    cert_samples: int = 2000
    lipschitz_samples: int = 200
    # tail window of the exponent fit, in decades of f - f*
    exponent_decades: float = 1.0

    def monitors(self) -> tuple[str, ...]:
        names = ("h1", "h2", "summability", "exponent", "lemma52", "lemma51")
        return tuple(n for n in names if getattr(self, n))


@dataclass
class ExperimentSpec:
    name: str = "experiment"
    seed: int = 0
    out_dir: str = "out"


@dataclass
class ExperimentConfig:
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    manifold: ManifoldSpec = field(default_factory=ManifoldSpec)
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    quasidistance: QuasiDistanceSpec = field(default_factory=QuasiDistanceSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    diagnostics: DiagnosticsSpec = field(default_factory=DiagnosticsSpec)
    sweep: dict[str, list] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.experiment.name

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


SECTIONS = {
    "experiment": ExperimentSpec,
    "manifold": ManifoldSpec,
    "objective": ObjectiveSpec,
    "quasidistance": QuasiDistanceSpec,
    "solver": SolverConfig,
    "diagnostics": DiagnosticsSpec,
}


def _coerce(value, default, annotation: str, path: str, errors: list):
    """Light type checking driven by the dataclass default and annotation text."""
    if value is None:
        if "None" not in annotation:
            errors.append(f"{path}: value required")
        return value
    if isinstance(default, bool) or annotation.startswith("bool"):
        if not isinstance(value, bool):
            errors.append(f"{path}: expected a boolean, got {value!r}")
        return value
    if annotation.startswith("int") or (isinstance(default, int) and not isinstance(default, bool) and "float" not in annotation):
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{path}: expected an integer, got {value!r}")
        return value
    if annotation.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{path}: expected a number, got {value!r}")
            return value
        return float(value)
    if annotation.startswith("str") and not isinstance(value, str):
        errors.append(f"{path}: expected a string, got {value!r}")
    return value


def _build_section(cls, data, section, errors):
    if not isinstance(data, dict):
        errors.append(f"{section}: expected a table")
        return cls()
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = f"{section}.{key}"
        if key not in known:
            errors.append(f"{path}: unknown field")
            continue
        f = known[key]
        default = f.default if f.default is not dataclasses.MISSING else None
        n_err = len(errors)
        value = _coerce(value, default, str(f.type), path, errors)
        if len(errors) == n_err:
            # ill-typed values keep the default so validation can still report the rest
            kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate a config from a nested dict; raises ConfigError with all problems."""
    errors: list[str] = []
    parts = {}
    for key in raw:
        if key not in SECTIONS and key != "sweep":
            errors.append(f"{key}: unknown section")
    for name, cls in SECTIONS.items():
        parts[name] = _build_section(cls, raw.get(name, {}), name, errors)
    sweep = raw.get("sweep", {})
    if not isinstance(sweep, dict):
        errors.append("sweep: expected a table of dotted keys to value lists")
        sweep = {}
    for key, values in sweep.items():
        if not isinstance(values, list):
            errors.append(f"sweep.{key}: expected a list of values")
        elif "." not in key or key.split(".", 1)[0] not in SECTIONS:
            errors.append(f"sweep.{key}: expected 'section.field'")
        else:
            sec, fld = key.split(".", 1)
            if fld not in {f.name for f in dataclasses.fields(SECTIONS[sec])}:
                errors.append(f"sweep.{key}: unknown field")
    cfg = ExperimentConfig(**parts, sweep=dict(sweep))
    errors += validate(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def _shape(v):
    try:
        return np.asarray(v, dtype=float).shape
    except (TypeError, ValueError):
        return None


def analytic_lipschitz(cfg: ExperimentConfig) -> float | None:
    obj = cfg.objective
    if obj.kind == "quadratic" and obj.Q is not None:
        try:
            return float(np.linalg.eigvalsh(np.asarray(obj.Q, dtype=float))[-1])
        except (ValueError, np.linalg.LinAlgError):
            return None
    if obj.kind == "power" and obj.p == 2.0:
        return 2.0
    return None


def validate(cfg: ExperimentConfig) -> list[str]:
    errors = []
    m, o, q, s = cfg.manifold, cfg.objective, cfg.quasidistance, cfg.solver
    if m.kind not in MANIFOLDS:
        errors.append(f"manifold.kind: unknown manifold {m.kind!r}; expected one of {sorted(MANIFOLDS)}")
    if not isinstance(m.dim, int) or m.dim < 1 or (m.kind == "sphere" and m.dim < 2):
        errors.append(f"manifold.dim: invalid dimension {m.dim!r}")
    n = m.dim if isinstance(m.dim, int) else 0
    if o.kind not in OBJECTIVE_KINDS:
        errors.append(f"objective.kind: unknown objective {o.kind!r}; expected one of {sorted(OBJECTIVE_KINDS)}")
    elif OBJECTIVE_KINDS[o.kind] != m.kind:
        errors.append(f"objective.kind: {o.kind!r} lives on {OBJECTIVE_KINDS[o.kind]!r}, not {m.kind!r}")
    else:
        if o.kind == "quadratic" and not o.random:
            if o.Q is None:
                errors.append("objective.Q: required unless objective.random = true")
            elif _shape(o.Q) != (n, n):
                errors.append(f"objective.Q: dimension mismatch, shape {_shape(o.Q)} vs manifold dim {n}")
            if o.center is not None and _shape(o.center) != (n,):
                errors.append(f"objective.center: dimension mismatch, shape {_shape(o.center)} vs manifold dim {n}")
        if o.kind == "power" and not o.p >= 2:
            errors.append("objective.p: exponent must be >= 2")
        if o.kind == "rayleigh" and not o.random:
            if o.A is None:
                errors.append("objective.A: required unless objective.random = true")
            elif _shape(o.A) != (n, n):
                errors.append(f"objective.A: dimension mismatch, shape {_shape(o.A)} vs sphere in R^{n}")
        if o.kind == "karcher":
            if not o.random:
                if not o.anchors:
                    errors.append("objective.anchors: required unless objective.random = true")
                else:
                    for i, c in enumerate(o.anchors):
                        if _shape(c) != (n, n):
                            errors.append(f"objective.anchors[{i}]: dimension mismatch, expected {n}x{n}")
            count = len(o.anchors) if o.anchors and not o.random else o.n_anchors
            if o.weights is not None and (_shape(o.weights) != (count,) or not math.isclose(sum(o.weights), 1.0)):
                errors.append("objective.weights: need one nonnegative weight per anchor summing to 1")
        if o.x0 is not None:
            want = (n, n) if m.kind == "spd" else (n,)
            if _shape(o.x0) != want:
                errors.append(f"objective.x0: dimension mismatch, shape {_shape(o.x0)} vs {want}")
    if q.kind not in VARIANTS:
        errors.append(f"quasidistance.kind: unknown variant {q.kind!r}; expected one of {VARIANTS}")
    elif q.kind == "gauge":
        if m.kind != "euclidean":
            errors.append("quasidistance.kind: the asymmetric gauge needs a euclidean manifold")
        for key in ("w_plus", "w_minus"):
            w = getattr(q, key)
            if w is None:
                errors.append(f"quasidistance.{key}: required for the gauge variant")
            elif _shape(w) not in ((), (n,)) or np.any(np.asarray(w, dtype=float) <= 0):
                errors.append(f"quasidistance.{key}: need positive weights, scalar or length {n}")
    elif q.kind == "scaled" and not q.scale > 0:
        errors.append("quasidistance.scale: must be positive")
    solver = copy.copy(s)
    if solver.method == "sd-fixed" and solver.lipschitz is None:
        solver.lipschitz = analytic_lipschitz(cfg)
    errors += [f"solver.{e}" for e in solver.errors()]
    if not cfg.diagnostics.exponent_decades > 0:
        errors.append("diagnostics.exponent_decades: must be positive")
    if cfg.diagnostics.certificate not in CERTIFICATES:
        errors.append(f"diagnostics.certificate: expected one of {CERTIFICATES}")
    return errors


def parse_value(text: str) -> Any:
    """Parse an override value as a TOML scalar/array, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings (or a mapping) to a raw config dict."""
    raw = copy.deepcopy(raw)
    items = overrides.items() if isinstance(overrides, dict) else (o.split("=", 1) for o in overrides or ())
    for item in items:
        if len(item) != 2:
            raise ConfigError([f"--set: expected key=value, got {'='.join(item)!r}"])
        key, value = item
        if isinstance(value, str):
            value = parse_value(value)
        if "." not in key:
            raise ConfigError([f"{key}: override keys must look like section.field"])
        sec, fld = key.strip().split(".", 1)
        raw.setdefault(sec, {})[fld] = value
    return raw


def load_raw(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"{path}: config file not found"])
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from None


def parse_config(path, overrides=None) -> ExperimentConfig:
    return config_from_dict(apply_overrides(load_raw(path), overrides))
