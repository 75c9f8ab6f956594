"""Riemannian steepest descent and the inexact proximal point method.

Both solvers return a :class:`DescentTrace` carrying everything the
convergence monitors in :mod:`riemkl.diagnostics` need: objective values,
gradient norms, step parameters, quasi-distance and Riemannian step lengths,
and the norm of the certified subgradient at each new iterate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np

from .manifolds import Manifold, Sphere
from .objectives import Objective
from .quasimetric import QuasiDistance

METHODS = ("sd-armijo", "sd-fixed", "prox-inexact")
STEP_POLICIES = ("midpoint", "low", "high-minus-margin")
POLICY_MARGIN = 0.01

CONVERGED = "converged"
MAX_ITERS = "max-iters"
SUBPROBLEM_FAILURE = "subproblem-failure"
# below |grad h|^2 ~ VALUE_NOISE |h|, Armijo decreases of h drown in rounding
VALUE_NOISE = 1e-12


class SolverError(RuntimeError):
    pass


class LineSearchError(SolverError):
    """No trial step satisfied the Armijo test within the halving budget."""


class SubproblemError(SolverError):
    """The inner proximal solver could not certify both acceptance tests."""


@dataclass
class SolverConfig:
    method: str = "sd-armijo"
    # Armijo
    alpha: float = 0.5
    t_init: float = 1.0
    max_halvings: int = 60
    # fixed step; t in (delta1, 2 (1 - delta2) / L)
    delta1: float = 0.1
    delta2: float = 0.4
    lipschitz: float | None = None
    step_policy: str = "midpoint"
    # proximal
    lambda_low: float = 1.0
    lambda_high: float | None = None
    lambda_schedule: str = "constant"
    lambda_period: int = 10
    theta: float = 1.0
    b: float = 2.0
    inner_max_iter: int = 2000
    inner_tol: float = 1e-9
    inner_tol_decay: float = 1.0
    # global
    max_iter: int = 5000
    grad_tol: float = 1e-6
    sphere_step_cap: float = 0.5 * math.pi
    snapshot_stride: int = 0

    @property
    def lam_hi(self) -> float:
        return self.lambda_low if self.lambda_high is None else self.lambda_high

    def errors(self) -> list[str]:
        """All constraint violations, as ``field: message`` strings."""
        errs = []
        if self.method not in METHODS:
            errs.append(f"method: unknown method {self.method!r}; expected one of {METHODS}")
        if not 0 < self.alpha < 1:
            errs.append("alpha: must lie in (0, 1)")
        if self.t_init <= 0:
            errs.append("t_init: must be positive")
        if self.max_halvings < 0:
            errs.append("max_halvings: must be >= 0")
        if self.method == "sd-fixed":
            if self.delta1 <= 0 or self.delta2 <= 0:
                errs.append("delta1/delta2: must be positive")
            if self.step_policy not in STEP_POLICIES:
                errs.append(f"step_policy: expected one of {STEP_POLICIES}")
            if self.lipschitz is not None and self.lipschitz * self.delta1 + self.delta2 >= 1:
                errs.append(
                    f"delta1: fixed-step condition L*delta1 + delta2 < 1 violated "
                    f"({self.lipschitz:g}*{self.delta1:g} + {self.delta2:g} >= 1)"
                )
        if self.method == "prox-inexact":
            if not 0 < self.lambda_low <= self.lam_hi < math.inf:
                errs.append("lambda_low: need 0 < lambda_low <= lambda_high < inf")
            if self.lambda_schedule not in ("constant", "geometric"):
                errs.append("lambda_schedule: expected 'constant' or 'geometric'")
            if not 0 < self.theta <= 1:
                errs.append("theta: must lie in (0, 1]")
            if self.b <= 1:
                errs.append("b: must exceed 1 for the inexact stopping rule to be reachable")
            if self.inner_max_iter < 1 or self.inner_tol <= 0:
                errs.append("inner_max_iter/inner_tol: must be positive")
        if self.max_iter < 0:
            errs.append("max_iter: must be >= 0")
        if self.grad_tol < 0:
            errs.append("grad_tol: must be >= 0")
        if not 0 < self.sphere_step_cap < math.pi:
            errs.append("sphere_step_cap: must lie in (0, pi)")
        return errs

    def lambda_at(self, k: int) -> float:
        lo, hi = self.lambda_low, self.lam_hi
        if self.lambda_schedule == "constant" or hi == lo or self.lambda_period < 2:
            return lo
        frac = (k % self.lambda_period) / (self.lambda_period - 1)
        return lo * (hi / lo) ** frac

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class DescentTrace:
    """Per-iteration record of a solver run.

    Entry ``k`` of each array describes the move ``x^k -> x^{k+1}``:
    ``f[k] = f(x^k)``, ``grad_norm[k] = |grad f(x^k)|``, ``step[k]`` is
    ``t_k`` (descent) or ``lambda_k`` (proximal), ``qd_step[k] =
    D(x^{k+1}, x^k)``, ``dist_step[k] = d(x^{k+1}, x^k)`` and ``w_norm[k]``
    is the norm of the certified subgradient at ``x^{k+1}``. The state after
    the last move lives in ``final_f`` / ``final_grad_norm`` / ``final_point``.
    """

    method: str
    f: np.ndarray
    grad_norm: np.ndarray
    step: np.ndarray
    qd_step: np.ndarray
    dist_step: np.ndarray
    w_norm: np.ndarray
    final_f: float
    final_grad_norm: float
    status: str
    final_point: np.ndarray | None = None
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    message: str = ""

    @property
    def n_iter(self) -> int:
        return len(self.f)

    @property
    def f_next(self) -> np.ndarray:
        """f(x^{k+1}) for every recorded k."""
        return np.append(self.f[1:], self.final_f) if self.n_iter else np.empty(0)

    @property
    def f_all(self) -> np.ndarray:
        return np.append(self.f, self.final_f)

    @property
    def grad_norm_all(self) -> np.ndarray:
        return np.append(self.grad_norm, self.final_grad_norm)

    @property
    def cum_qd(self) -> np.ndarray:
        return np.cumsum(self.qd_step)


class _TraceBuilder:
    def __init__(self, method, stride):
        self.method = method
        self.stride = stride
        self.cols = {k: [] for k in ("f", "grad_norm", "step", "qd_step", "dist_step", "w_norm")}
        self.snapshots = {}

    def snap(self, k, x):
        if self.stride and k % self.stride == 0:
            self.snapshots[k] = np.array(x, copy=True)

    def add(self, **row):
        for k, v in row.items():
            self.cols[k].append(float(v))

    def build(self, x, fx, gn, status, message=""):
        self.snap(len(self.cols["f"]), x)
        arrays = {k: np.asarray(v, dtype=float) for k, v in self.cols.items()}
        return DescentTrace(self.method, **arrays, final_f=float(fx), final_grad_norm=float(gn),
                            status=status, final_point=np.array(x, copy=True),
                            snapshots=self.snapshots, message=message)


def _grad_decrease_step(manifold, model, y, gh, ghn, t_init, max_halvings, step_cap):
    """Halved step along -grad h giving the smallest |grad h|, or None if none lowers it."""
    best, best_n = None, ghn
    for j in range(max_halvings + 1):
        t = t_init * 0.5**j
        if step_cap is not None and t * ghn > step_cap:
            continue
        z = manifold.exp(y, -t * gh)
        zn = float(manifold.norm(z, model.gradient(z)))
        if zn < best_n:
            best, best_n = z, zn
        elif best is not None:
            break
    return best


class LineSearchResult(NamedTuple):
    step: float
    point: np.ndarray
    value: float


def armijo_step(manifold: Manifold, obj: Objective, x, alpha: float = 0.5, t_init: float = 1.0,
                max_halvings: int = 60, grad=None, fx=None, step_cap: float | None = None) -> LineSearchResult:
    """Largest ``t = t_init 2^-j`` (j <= max_halvings) passing the Armijo test.

    The test is ``f(exp_x(-t g)) <= f(x) - alpha t |g|^2`` with ``g = grad f(x)``.
    Trial steps with ``t |g| > step_cap`` are skipped.
    """
    g = obj.gradient(x) if grad is None else grad
    fx = obj.value(x) if fx is None else fx
    gn2 = float(manifold.inner(x, g, g))
    if gn2 == 0.0:
        raise ValueError("Armijo search needs a nonzero gradient; x is critical")
    gn = math.sqrt(gn2)
    for j in range(max_halvings + 1):
        t = t_init * 0.5**j
        if step_cap is not None and t * gn > step_cap:
            continue
        y = manifold.exp(x, -t * g)
        fy = obj.value(y)
        if fy <= fx - alpha * t * gn2:
            return LineSearchResult(t, y, fy)
    raise LineSearchError(
        f"no Armijo step within {max_halvings} halvings (|grad f| = {gn:.3e}, f = {fx:.17g})"
    )


def fixed_step_interval(L: float, delta1: float, delta2: float) -> tuple[float, float]:
    if L <= 0 or delta1 <= 0 or delta2 <= 0:
        raise ValueError("L, delta1 and delta2 must be positive")
    if L * delta1 + delta2 >= 1:
        raise ValueError(f"empty fixed-step interval: L*delta1 + delta2 = {L * delta1 + delta2:g} >= 1")
    return delta1, 2.0 * (1.0 - delta2) / L


def fixed_step(L: float, delta1: float, delta2: float, policy: str = "midpoint") -> float:
    lo, hi = fixed_step_interval(L, delta1, delta2)
    if policy == "midpoint":
        return 0.5 * (lo + hi)
    if policy == "low":
        return lo + POLICY_MARGIN * (hi - lo)
    if policy == "high-minus-margin":
        return hi - POLICY_MARGIN * (hi - lo)
    raise ValueError(f"unknown step policy {policy!r}")


def _step_cap(manifold, config):
    return config.sphere_step_cap if isinstance(manifold, Sphere) else None


def steepest_descent(manifold: Manifold, obj: Objective, x0, config: SolverConfig | None = None,
                     qdist: QuasiDistance | None = None) -> DescentTrace:
    """x^{k+1} = exp_{x^k}(-t_k grad f(x^k)) with Armijo or fixed steps.

    On the sphere, ``t_k |grad f(x^k)|`` is capped at ``sphere_step_cap``
    (pi/2 by default) so every step follows a minimal geodesic.
    """
    config = config or SolverConfig()
    qdist = qdist or QuasiDistance(manifold)
    cap = _step_cap(manifold, config)
    if config.method == "sd-fixed":
        if config.lipschitz is None:
            raise ValueError("sd-fixed needs config.lipschitz")
        t_fixed = fixed_step(config.lipschitz, config.delta1, config.delta2, config.step_policy)
    elif config.method != "sd-armijo":
        raise ValueError(f"steepest_descent does not run method {config.method!r}")

    tb = _TraceBuilder(config.method, config.snapshot_stride)
    x = np.array(x0, dtype=float)
    fx, g = obj.value(x), obj.gradient(x)
    gn = float(manifold.norm(x, g))
    for k in range(config.max_iter):
        if gn <= config.grad_tol:
            return tb.build(x, fx, gn, CONVERGED)
        tb.snap(k, x)
        if config.method == "sd-armijo":
            try:
                t, y, fy = armijo_step(manifold, obj, x, config.alpha, config.t_init,
                                       config.max_halvings, grad=g, fx=fx, step_cap=cap)
            except LineSearchError as exc:
                return tb.build(x, fx, gn, SUBPROBLEM_FAILURE, str(exc))
        else:
            t = t_fixed if cap is None else min(t_fixed, cap / gn)
            y = manifold.exp(x, -t * g)
            fy = obj.value(y)
        gy = obj.gradient(y)
        gny = float(manifold.norm(y, gy))
        tb.add(f=fx, grad_norm=gn, step=t, qd_step=qdist(y, x), dist_step=manifold.dist(y, x), w_norm=gny)
        x, fx, g, gn = y, fy, gy, gny
    return tb.build(x, fx, gn, CONVERGED if gn <= config.grad_tol else MAX_ITERS)


class _ProxModel(Objective):
    """h(y) = f(y) + (lam / 2) D(y, x)^2 for a fixed prox center x."""

    name = "prox-model"

    def __init__(self, obj, qdist, center, lam):
        super().__init__(obj.manifold)
        self.obj = obj
        self.qdist = qdist
        self.rev = qdist.reversed()
        self.center = center
        self.lam = lam

    def value(self, y):
        return self.obj.value(y) + 0.5 * self.lam * float(self.qdist(y, self.center)) ** 2

    def gradient(self, y):
        return self.obj.gradient(y) + 0.5 * self.lam * self.rev.sq_grad_y(self.center, y)


class ProxStepResult(NamedTuple):
    point: np.ndarray
    w_norm: float
    value: float
    qd_step: float
    inner_iters: int


def prox_inexact_step(manifold: Manifold, obj: Objective, qdist: QuasiDistance, x, lam: float,
                      theta: float = 1.0, b: float = 2.0, inner_max_iter: int = 2000,
                      inner_tol: float = 1e-9, alpha: float = 0.5, t_init: float = 1.0,
                      max_halvings: int = 60, step_cap: float | None = None) -> ProxStepResult:
    """One inexact proximal step from ``x``.

    Minimizes ``h(y) = f(y) + lam/2 D(y, x)^2`` by Armijo steepest descent
    and accepts the first iterate with ``D(y, x) > 0`` that passes

    (i)  ``f(y) + theta lam / 2 D(y, x)^2 <= f(x)``
    (ii) ``|grad f(y)| <= b lam D(y, x)``

    and has ``|grad h(y)| <= min(inner_tol, (b - 1) lam D(y, x))``. Once
    ``|grad h|^2`` is too small for Armijo decreases of h to rise above
    rounding (or Armijo fails), the inner loop takes steps that decrease
    |grad h| instead; if that stalls too, the current iterate is still
    accepted when it passes (i) and (ii).
    """
    fx = obj.value(x)
    g = obj.gradient(x)
    gn = float(manifold.norm(x, g))
    if gn == 0.0:
        raise ValueError("proximal step needs a noncritical x (x^{k+1} != x^k is assumed)")
    model = _ProxModel(obj, qdist, x, lam)
    sigma = min(1.0 / lam, 0.1) / max(1.0, gn)
    y = manifold.exp(x, -sigma * g)

    def tests(y):
        fy = obj.value(y)
        d = float(qdist(y, x))
        gf = obj.gradient(y)
        gfn = float(manifold.norm(y, gf))
        ok = d > 0 and fy + 0.5 * theta * lam * d * d <= fx and gfn <= b * lam * d
        return ok, fy, d, gfn

    last = ""
    for it in range(inner_max_iter):
        gh = model.gradient(y)
        ghn = float(manifold.norm(y, gh))
        ok, fy, d, gfn = tests(y)
        if ok and ghn <= min(inner_tol, (b - 1.0) * lam * d):
            return ProxStepResult(y, gfn, fy, d, it)
        if ghn == 0.0:
            break
        hy = model.value(y)
        y_new = None
        if ghn * ghn > VALUE_NOISE * max(1.0, abs(hy)):
            try:
                _, y_new, _ = armijo_step(manifold, model, y, alpha, t_init, max_halvings,
                                          grad=gh, fx=hy, step_cap=step_cap)
            except LineSearchError as exc:
                last = str(exc)
        if y_new is None:
            # decreases of h are at rounding level: steer by |grad h| instead
            y_new = _grad_decrease_step(manifold, model, y, gh, ghn, t_init, max_halvings, step_cap)
            if y_new is None:
                last = last or "no step lowers |grad h|"
                break
        y = y_new
    ok, fy, d, gfn = tests(y)
    if ok:
        return ProxStepResult(y, gfn, fy, d, it)
    raise SubproblemError(
        f"inner solver failed after {it + 1} iterations (lambda={lam:g}, D={d:.3e}, "
        f"|grad f|={gfn:.3e}, f(y)-f(x)={fy - fx:.3e}) {last}".strip()
    )


def run_prox(manifold: Manifold, obj: Objective, qdist: QuasiDistance, x0,
             config: SolverConfig | None = None) -> DescentTrace:
    """Inexact proximal point iterations with lambda_k in [lambda_low, lambda_high]."""
    config = config or SolverConfig(method="prox-inexact")
    cap = _step_cap(manifold, config)
    tb = _TraceBuilder("prox-inexact", config.snapshot_stride)
    x = np.array(x0, dtype=float)
    fx = obj.value(x)
    gn = obj.grad_norm(x)
    for k in range(config.max_iter):
        if gn <= config.grad_tol:
            return tb.build(x, fx, gn, CONVERGED)
        tb.snap(k, x)
        lam = config.lambda_at(k)
        tol = max(config.inner_tol * config.inner_tol_decay**k, 1e-14)
        try:
            res = prox_inexact_step(manifold, obj, qdist, x, lam, config.theta, config.b,
                                    config.inner_max_iter, tol, config.alpha, config.t_init,
                                    config.max_halvings, cap)
        except SubproblemError as exc:
            return tb.build(x, fx, gn, SUBPROBLEM_FAILURE, str(exc))
        tb.add(f=fx, grad_norm=gn, step=lam, qd_step=res.qd_step,
               dist_step=manifold.dist(res.point, x), w_norm=res.w_norm)
        x, fx, gn = res.point, res.value, res.w_norm
    return tb.build(x, fx, gn, CONVERGED if gn <= config.grad_tol else MAX_ITERS)


def solve(manifold: Manifold, obj: Objective, x0, config: SolverConfig,
          qdist: QuasiDistance | None = None) -> DescentTrace:
    if config.method == "prox-inexact":
        return run_prox(manifold, obj, qdist or QuasiDistance(manifold), x0, config)
    return steepest_descent(manifold, obj, x0, config, qdist)
