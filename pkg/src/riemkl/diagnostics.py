"""Runtime checks of the KL convergence machinery along solver traces.

The abstract convergence argument for descent sequences rests on two
inequalities with fixed constants ``a, b > 0``:

* sufficient decrease: ``f(x^{k+1}) + a D(x^{k+1}, x^k)^2 <= f(x^k)``
* relative error: ``|w^{k+1}| <= b D(x^{k+1}, x^k)`` for a subgradient
  ``w^{k+1}`` at ``x^{k+1}``

plus a KL inequality ``phi'(f(x) - f(xbar)) dist(0, df(x)) >= 1`` near the
limit. The functions here check those inequalities numerically and certify
KL desingularizers for Morse and noncritical points.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .objectives import Objective, hessian_spectrum
from .quasimetric import QuasiDistance
from .solvers import DescentTrace, SolverConfig

H_TOL = 1e-12
LEMMA52_TOL = 1e-10
# gaps f - f* below this (relative to max(1, |f*|)) are at the rounding level of f
GAP_FLOOR = 1e-12
MORSE_UPPER_SAFETY = 1.5
MORSE_LOWER_SAFETY = 0.5


class DiagnosticsError(ValueError):
    pass


class CheckResult(NamedTuple):
    passed: bool
    max_violation: float


def check_H1(trace: DescentTrace, a: float) -> CheckResult:
    """Sufficient decrease ``f(x^{k+1}) + a D^2 <= f(x^k) + 1e-12`` for all k."""
    if a < 0:
        raise DiagnosticsError("a must be nonnegative")
    if trace.n_iter == 0:
        raise DiagnosticsError("empty trace")
    viol = trace.f_next + a * trace.qd_step**2 - trace.f
    worst = float(viol.max())
    return CheckResult(worst <= H_TOL, max(worst, 0.0))


def check_H2(trace: DescentTrace, b: float) -> CheckResult:
    """Relative error ``|w^{k+1}| <= b D(x^{k+1}, x^k) + 1e-12`` for all k."""
    if b < 0:
        raise DiagnosticsError("b must be nonnegative")
    if trace.n_iter == 0:
        raise DiagnosticsError("empty trace")
    if trace.w_norm is None or len(trace.w_norm) != trace.n_iter or np.any(np.isnan(trace.w_norm)):
        raise DiagnosticsError("trace carries no subgradient norms")
    viol = trace.w_norm - b * trace.qd_step
    worst = float(viol.max())
    return CheckResult(worst <= H_TOL, max(worst, 0.0))


def best_feasible_a(trace: DescentTrace) -> float:
    """Largest a for which the decrease inequality holds at every step with D > 0."""
    mask = trace.qd_step > 0
    if not mask.any():
        return math.inf
    return float(np.min((trace.f[mask] - trace.f_next[mask]) / trace.qd_step[mask] ** 2))


def best_feasible_b(trace: DescentTrace) -> float:
    """Smallest b for which the relative-error inequality holds at every step with D > 0."""
    mask = trace.qd_step > 0
    if not mask.any():
        return 0.0
    return float(np.max(trace.w_norm[mask] / trace.qd_step[mask]))


def constructive_constants(config: SolverConfig, qdist: QuasiDistance, trace: DescentTrace,
                           L: float | None = None) -> tuple[float, float | None]:
    """The (a, b) that the convergence proofs guarantee for ``trace``.

    Proximal: ``a = theta lambda_low / 2`` and ``b = b_cfg lambda_high``.
    Armijo: ``a = alpha / (t_init s2^2)``.
    Fixed step: ``a = beta / s2^2`` with ``beta = delta2 L / (2 (1 - delta2))``.
    Descent (both): ``b = (L + 1/t_min) / s1``, or None when L is unknown.
    """
    s1, s2 = qdist.equivalence_constants()
    if config.method == "prox-inexact":
        return 0.5 * config.theta * config.lambda_low, config.b * config.lam_hi
    if config.method == "sd-armijo":
        # every accepted step satisfies t <= t_init, so alpha t |g|^2 >= (alpha / t_init) d^2
        a = config.alpha / (config.t_init * s2**2)
    else:
        lip = config.lipschitz if config.lipschitz is not None else L
        if lip is None:
            raise DiagnosticsError("fixed-step constants need a Lipschitz constant")
        beta = config.delta2 * lip / (2.0 * (1.0 - config.delta2))
        a = beta / s2**2
    if L is None or trace.n_iter == 0:
        return a, None
    return a, (L + 1.0 / float(trace.step.min())) / s1


class Summability(NamedTuple):
    partial_sums: np.ndarray
    window_ratios: np.ndarray
    ratio: float
    is_cauchy: bool


def summability(trace: DescentTrace, window: int = 5) -> Summability:
    """Partial sums of D-steps and a geometric tail estimate.

    The D-steps are cut into consecutive windows; the per-step ratio between
    window ``i + 1`` and window ``i`` is ``(S_{i+1} / S_i)^(1/window)``. The
    reported ratio is the geometric mean of the last three window ratios,
    which smooths out step patterns that alias with the window length, and
    the tail is judged Cauchy when it is below one.
    """
    d = np.asarray(trace.qd_step, dtype=float)
    sums = np.cumsum(d)
    if d.size and not np.any(d > 0):
        return Summability(sums, np.zeros(0), 0.0, True)
    window = max(1, min(window, d.size // 4))
    nwin = d.size // window
    if nwin < 2:
        return Summability(sums, np.zeros(0), math.nan, False)
    start = d.size - nwin * window
    ws = d[start:].reshape(nwin, window).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = (ws[1:] / ws[:-1]) ** (1.0 / window)
    with np.errstate(divide="ignore"):
        r = float(np.exp(np.mean(np.log(ratios[-3:]))))
    return Summability(sums, ratios, r, bool(r < 1))


class Lemma51(NamedTuple):
    lhs: np.ndarray
    rhs: np.ndarray
    passed: bool


def lemma51_bound(a_seq) -> Lemma51:
    """Prefix bound for positive sequences.

    For every j >= 1 checks
    ``sqrt(sum_{k=1..j} a_{k-1}) <= sqrt(a_0) + sqrt(sum_{k=1..j} a_k^2 / a_{k-1})``,
    the Cauchy-Schwarz step showing that summable ``a_k^2 / a_{k-1}`` forces
    summable ``a_k``.
    """
    a = np.asarray(a_seq, dtype=float)
    if a.ndim != 1 or a.size < 2:
        raise DiagnosticsError("need a 1-d sequence with at least two terms")
    if np.any(a <= 0):
        raise DiagnosticsError("sequence entries must be positive")
    lhs = np.sqrt(np.cumsum(a[:-1]))
    rhs = np.sqrt(a[0]) + np.sqrt(np.cumsum(a[1:] ** 2 / a[:-1]))
    return Lemma51(lhs, rhs, bool(np.all(lhs <= rhs * (1 + 1e-12))))


def default_f_star(obj: Objective | None, trace: DescentTrace, grad_tol: float, L: float | None) -> float:
    """Known minimum when available, else final value minus eps^2 / (2L)."""
    if obj is not None and obj.f_star is not None:
        return float(obj.f_star)
    lip = L if L else 1.0
    return float(trace.final_f - grad_tol**2 / (2.0 * lip))


def estimate_kl_exponent(trace: DescentTrace, f_star: float, eta: float = math.inf,
                         min_points: int = 10, decades: float = 1.0) -> tuple[float, float]:
    """Slope of log |grad f| against log (f - f*) over the tail of a run.

    Uses the points with ``f - f*`` in ``(1e-12, eta)``; of these, keeps the
    trailing stretch spanning ``decades`` orders of magnitude, extended to at
    least ``min_points`` points. Returns ``(alpha_hat, rms_residual)``.
    """
    gap = trace.f_all - f_star
    gn = trace.grad_norm_all
    keep = (gap > 1e-12) & (gap < eta) & (gn > 0)
    gap, gn = gap[keep], gn[keep]
    if gap.size < min_points:
        raise DiagnosticsError(f"insufficient points for an exponent fit ({gap.size} < {min_points})")
    lg = np.log10(gap)
    in_decade = lg <= lg[-1] + decades
    # trailing run of points inside the last decade
    n = int(np.argmin(in_decade[::-1])) if not in_decade.all() else in_decade.size
    n = max(n, min_points)
    xs, ys = np.log(gap[-n:]), np.log(gn[-n:])
    slope, icpt = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + icpt)
    return float(slope), float(np.sqrt(np.mean(resid**2)))


@dataclass
class KLCertificate:
    """Desingularizer phi(s) = c s^(1 - theta) valid on B(center, rho) and 0 < f - f(center) < eta.

    ``theta = 0`` is the linear form phi(s) = s / delta with c = 1 / delta.
    """

    c: float
    theta: float
    rho: float
    eta: float
    provenance: str
    center: np.ndarray | None = None
    f_center: float | None = None

    def __post_init__(self):
        if not self.c > 0:
            raise DiagnosticsError("phi scale must be positive")
        if not 0 <= self.theta < 1:
            raise DiagnosticsError("exponent theta must lie in [0, 1)")
        if not (self.rho > 0 and self.eta > 0):
            raise DiagnosticsError("rho and eta must be positive")

    @property
    def form(self) -> str:
        return "linear" if self.theta == 0 else "power"

    def phi(self, s):
        return self.c * np.power(np.asarray(s, dtype=float), 1.0 - self.theta)

    def dphi(self, s):
        return self.c * (1.0 - self.theta) * np.power(np.asarray(s, dtype=float), -self.theta)

    def to_dict(self):
        d = asdict(self)
        d["center"] = None if self.center is None else np.asarray(self.center).tolist()
        d["form"] = self.form
        return d


def morse_certificate(eigenvalues, radius: float, center=None, f_center=None) -> KLCertificate:
    """KL certificate at a nondegenerate critical point from its Hessian spectrum.

    With ``delta1 = 0.75 max|lambda|`` and ``delta2 = 0.5 min|lambda|`` the
    bounds ``|f - f(xbar)| <= delta1 d^2`` and ``|grad f| >= delta2 d`` give
    ``phi(s) = 2 sqrt(delta1 s) / delta2`` with ``eta = rho = radius``.
    """
    lam = np.abs(np.asarray(eigenvalues, dtype=float))
    if lam.size == 0 or np.any(lam == 0):
        raise DiagnosticsError("degenerate critical point: Hessian has a zero eigenvalue")
    if radius <= 0:
        raise DiagnosticsError("radius must be positive")
    d1 = MORSE_UPPER_SAFETY * 0.5 * lam.max()
    d2 = MORSE_LOWER_SAFETY * lam.min()
    return KLCertificate(2.0 * math.sqrt(d1) / d2, 0.5, radius, radius, "morse", center, f_center)


def noncritical_certificate(obj: Objective, xbar, lipschitz: float | None = None) -> KLCertificate:
    """Linear KL certificate at a noncritical point, with ``delta = |grad f(xbar)|``.

    Without ``lipschitz`` this is the classical construction ``phi(t) = t / delta``
    with ``rho = eta = delta / 2``. It does not hold pointwise in general, since
    ``|grad f|`` may dip below ``delta`` inside the ball. Given a gradient
    Lipschitz constant L, the certificate ``phi(t) = 2 t / delta`` on
    ``rho = min(delta / 2, delta / (2 L))`` is valid because ``|grad f| >= delta / 2`` there.
    """
    delta = obj.grad_norm(xbar)
    if delta == 0:
        raise DiagnosticsError("xbar is critical; the noncritical certificate does not apply")
    c, rho = 1.0 / delta, delta / 2
    if lipschitz is not None:
        if not lipschitz > 0:
            raise DiagnosticsError("lipschitz must be positive")
        c, rho = 2.0 / delta, min(delta / 2, delta / (2 * lipschitz))
    return KLCertificate(c, 0.0, rho, delta / 2, "noncritical", np.array(xbar, copy=True), obj.value(xbar))


def _sample_in_ball(M, center, radius, rng, basis, size):
    """``size`` points drawn uniformly in normal coordinates from B(center, radius)."""
    basis = np.asarray(basis)
    coef = rng.standard_normal((size, len(basis)))
    coef /= np.linalg.norm(coef, axis=1, keepdims=True)
    coef *= radius * rng.uniform(size=(size, 1)) ** (1.0 / len(basis))
    v = np.tensordot(coef, basis, axes=1)
    return M.exp(np.broadcast_to(center, v.shape), v)


def kl_pass_rate(obj: Objective, cert: KLCertificate, n_samples: int = 10_000, seed=None,
                 max_draws: int | None = None, chunk: int = 4096) -> tuple[float, int]:
    """Fraction of sampled points in the certificate's region satisfying the KL inequality.

    Points are drawn uniformly (in normal coordinates) from B(center, rho) and
    kept when ``f(center) < f < f(center) + eta``. Returns ``(rate, n_kept)``.
    """
    M = obj.manifold
    rng = np.random.default_rng(seed)
    f0 = obj.value(cert.center) if cert.f_center is None else cert.f_center
    basis = M.tangent_basis(cert.center)
    max_draws = max_draws or 100 * n_samples
    kept = passed = drawn = 0
    while drawn < max_draws and kept < n_samples:
        pts = _sample_in_ball(M, cert.center, cert.rho, rng, basis, min(chunk, max_draws - drawn))
        drawn += len(pts)
        for x in pts:
            s = obj.value(x) - f0
            if not 0 < s < cert.eta:
                continue
            kept += 1
            passed += float(cert.dphi(s)) * obj.grad_norm(x) >= 1.0
            if kept == n_samples:
                break
    return (passed / kept if kept else 0.0), kept


def certify_morse(obj: Objective, xbar, radius: float = 1.0, target: float = 0.99,
                  n_samples: int = 2000, seed=None, max_halvings: int = 30) -> KLCertificate:
    """Morse certificate at ``xbar`` with its radius halved until the sampled KL check passes."""
    eig = hessian_spectrum(obj, xbar)
    f0 = obj.value(xbar)
    cert = morse_certificate(eig, radius, center=np.array(xbar, copy=True), f_center=f0)
    for _ in range(max_halvings):
        rate, kept = kl_pass_rate(obj, cert, n_samples, seed)
        if kept and rate >= target:
            return cert
        cert = morse_certificate(eig, cert.rho / 2, center=cert.center, f_center=f0)
    raise DiagnosticsError(f"KL check did not reach {target:.0%} after {max_halvings} radius halvings")


@dataclass
class Lemma52Result:
    first_valid_k: int | None
    ks: np.ndarray
    margins: np.ndarray
    excluded: list[int] = field(default_factory=list)


def lemma52_monitor(trace: DescentTrace, cert: KLCertificate, a: float, b: float, f_star: float) -> Lemma52Result:
    """Desingularized descent inequality along a trace.

    For k >= 1 the margin is
    ``(b/a) [phi(f_k - f*) - phi(f_{k+1} - f*)] - D_k^2 / D_{k-1}`` with
    ``D_k = D(x^{k+1}, x^k)``. Steps are excluded when phi is undefined (the
    gap leaves ``(0, eta)``), when the gap is within rounding of f
    (``<= 1e-12 max(1, |f*|)``) or when the previous step is zero.
    ``first_valid_k`` is the first k from which every monitored margin is
    >= -1e-10.
    """
    if a <= 0 or b <= 0:
        raise DiagnosticsError("a and b must be positive")
    f, fn, d = trace.f, trace.f_next, trace.qd_step
    floor = GAP_FLOOR * max(1.0, abs(f_star))
    ks, margins, excluded = [], [], []
    for k in range(1, trace.n_iter):
        s0, s1 = f[k] - f_star, fn[k] - f_star
        if not (floor < s0 < cert.eta and s1 >= 0) or d[k - 1] <= 0:
            excluded.append(k)
            continue
        lhs = (b / a) * float(cert.phi(s0) - cert.phi(s1))
        ks.append(k)
        margins.append(lhs - d[k] ** 2 / d[k - 1])
    ks = np.asarray(ks, dtype=int)
    margins = np.asarray(margins, dtype=float)
    first = None
    if ks.size:
        bad = np.nonzero(margins < -LEMMA52_TOL)[0]
        if bad.size == 0:
            first = int(ks[0])
        elif bad[-1] + 1 < ks.size:
            first = int(ks[bad[-1] + 1])
    return Lemma52Result(first, ks, margins, excluded)


@dataclass
class DiagnosticsReport:
    h1: dict | None = None
    h2: dict | None = None
    summability: dict | None = None
    exponent: dict | None = None
    lemma52: dict | None = None
    lemma51: dict | None = None

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


def diagnose(trace: DescentTrace, a: float | None = None, b: float | None = None,
             f_star: float | None = None, cert: KLCertificate | None = None,
             monitors=("h1", "h2", "summability", "exponent", "lemma52", "lemma51"),
             exponent_decades: float = 1.0) -> DiagnosticsReport:
    """Run the enabled monitors.

    Every enabled monitor yields an entry; when its inputs are missing the
    entry is ``{"skipped": reason}``. ``exponent_decades`` is the width of the
    tail window for the exponent fit.
    """
    rep = DiagnosticsReport()
    if trace.n_iter == 0:
        for name in monitors:
            setattr(rep, name, {"skipped": "empty trace"})
        return rep
    if "h1" in monitors:
        a_best = best_feasible_a(trace)
        res = check_H1(trace, a) if a is not None else None
        rep.h1 = {"a": a, "best_feasible_a": a_best,
                  "pass": None if res is None else res.passed,
                  "max_violation": None if res is None else res.max_violation}
    if "h2" in monitors:
        if np.any(np.isnan(trace.w_norm)):
            rep.h2 = {"skipped": "trace has no subgradient norms"}
        else:
            b_best = best_feasible_b(trace)
            res = check_H2(trace, b) if b is not None else None
            rep.h2 = {"b": b, "best_feasible_b": b_best,
                      "pass": None if res is None else res.passed,
                      "max_violation": None if res is None else res.max_violation}
    if "summability" in monitors:
        s = summability(trace)
        rep.summability = {"total": float(s.partial_sums[-1]), "ratio": s.ratio, "is_cauchy": s.is_cauchy}
    if "exponent" in monitors:
        if f_star is None:
            rep.exponent = {"skipped": "no reference value f*"}
        else:
            try:
                alpha, resid = estimate_kl_exponent(trace, f_star, decades=exponent_decades)
                rep.exponent = {"alpha": alpha, "residual": resid, "decades": exponent_decades}
            except DiagnosticsError as exc:
                rep.exponent = {"alpha": None, "error": str(exc)}
    if "lemma52" in monitors:
        a_use = a if a is not None else best_feasible_a(trace)
        b_use = b if b is not None else best_feasible_b(trace)
        if cert is None or f_star is None:
            rep.lemma52 = {"skipped": "no KL certificate"}
        elif not (0 < a_use < math.inf and b_use > 0):
            rep.lemma52 = {"skipped": "no positive constants a, b"}
        else:
            res = lemma52_monitor(trace, cert, a_use, b_use, f_star)
            rep.lemma52 = {"first_valid_k": res.first_valid_k, "monitored": int(res.ks.size),
                           "min_margin": float(res.margins.min()) if res.margins.size else None,
                           "excluded": len(res.excluded), "a": a_use, "b": b_use,
                           "certificate": cert.to_dict()}
    if "lemma51" in monitors:
        pos = trace.qd_step[trace.qd_step > 0]
        if pos.size >= 2:
            res = lemma51_bound(pos)
            rep.lemma51 = {"pass": res.passed, "lhs": float(res.lhs[-1]), "rhs": float(res.rhs[-1])}
        else:
            rep.lemma51 = {"skipped": "fewer than two positive steps"}
    return rep
