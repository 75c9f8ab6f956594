import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riemkl.manifolds import SPD, Euclidean, Sphere
from riemkl.objectives import EuclideanQuadratic, KarcherSPD, PowerNorm, RayleighSphere, random_symmetric
from riemkl.quasimetric import QuasiDistance
from riemkl.solvers import (LineSearchError, SolverConfig, SubproblemError, armijo_step, fixed_step,
                            fixed_step_interval, prox_inexact_step, run_prox, solve, steepest_descent)

HALF_NORM = EuclideanQuadratic(np.eye(2))


def brute_force_armijo(phi, slope, alpha, t_init, J):
    """First j with phi(t) <= phi(0) - alpha t slope, for a 1-d restriction phi."""
    for j in range(J + 1):
        t = t_init * 2.0**-j
        if phi(t) <= phi(0) - alpha * t * slope:
            return t
    return None


def test_armijo_examples():
    x = np.array([1.0, 0.0])
    t, y, fy = armijo_step(HALF_NORM.manifold, HALF_NORM, x, alpha=0.5)
    assert t == 1.0
    np.testing.assert_array_equal(y, [0, 0])
    assert fy == 0
    t, y, _ = armijo_step(HALF_NORM.manifold, HALF_NORM, x, alpha=0.9)
    assert t == brute_force_armijo(lambda s: 0.5 * (1 - s) ** 2, 1.0, 0.9, 1.0, 60) == 0.125
    np.testing.assert_allclose(y, [0.875, 0])


@given(alpha=st.floats(0.01, 0.99), t_init=st.floats(0.1, 16.0), seed=st.integers(0, 10**6))
def test_armijo_matches_brute_force(alpha, t_init, seed):
    r = np.random.default_rng(seed)
    q = EuclideanQuadratic(np.diag(r.uniform(0.1, 5.0, 3)), r.standard_normal(3))
    x = r.standard_normal(3)
    g = q.gradient(x)
    if np.linalg.norm(g) < 1e-8:
        return
    ref = brute_force_armijo(lambda s: q.value(x - s * g), g @ g, alpha, t_init, 60)
    t, y, _ = armijo_step(q.manifold, q, x, alpha, t_init)
    assert t == ref
    np.testing.assert_allclose(y, x - t * g)


def test_armijo_errors():
    with pytest.raises(ValueError, match="critical"):
        armijo_step(HALF_NORM.manifold, HALF_NORM, np.zeros(2))
    with pytest.raises(LineSearchError):
        armijo_step(HALF_NORM.manifold, HALF_NORM, np.array([1.0, 0.0]), alpha=0.9, max_halvings=2)


def test_armijo_sphere_cap():
    r = RayleighSphere(np.diag([1.0, 2.0, 3.0]))
    x = np.array([0.1, 0.2, 1.0])
    x /= np.linalg.norm(x)
    g = r.gradient(x)
    t, _, _ = armijo_step(r.manifold, r, x, t_init=100.0, step_cap=math.pi / 2)
    assert t * np.linalg.norm(g) <= math.pi / 2


def test_fixed_step_examples():
    assert fixed_step_interval(1.0, 0.1, 0.4) == pytest.approx((0.1, 1.2))
    assert fixed_step(1.0, 0.1, 0.4) == pytest.approx(0.65)
    assert fixed_step_interval(4.0, 0.1, 0.5) == pytest.approx((0.1, 0.25))
    assert fixed_step(4.0, 0.1, 0.5) == pytest.approx(0.175)
    with pytest.raises(ValueError, match="L\\*delta1 \\+ delta2 = 1.3 >= 1"):
        fixed_step(4.0, 0.2, 0.5)


@pytest.mark.parametrize("policy", ["midpoint", "low", "high-minus-margin"])
def test_fixed_step_policies_inside_interval(policy):
    lo, hi = fixed_step_interval(2.0, 0.1, 0.3)
    t = fixed_step(2.0, 0.1, 0.3, policy)
    assert lo < t < hi


def test_sd_rayleigh_example():
    r = RayleighSphere(np.diag([1.0, 2.0, 3.0]))
    tr = steepest_descent(r.manifold, r, np.ones(3) / np.sqrt(3), SolverConfig(alpha=0.5))
    assert tr.status == "converged"
    assert abs(tr.final_point[0]) >= 1 - 1e-8


def test_sd_fixed_linear_rate():
    Q = np.diag([1.0, 4.0])
    q = EuclideanQuadratic(Q)
    cfg = SolverConfig(method="sd-fixed", lipschitz=4.0, delta1=0.1, delta2=0.5, grad_tol=1e-12)
    tr = solve(q.manifold, q, np.array([1.0, 1.0]), cfg)
    t = 0.175
    r = max(abs(1 - t * lam) for lam in (1.0, 4.0))
    k = np.arange(tr.n_iter)
    # f is quadratic in the error, so it contracts by r^2 per step
    assert np.all(tr.f <= tr.f[0] * r ** (2 * k) * (1 + 1e-9))
    assert tr.status == "converged"


def test_sd_critical_start():
    tr = solve(HALF_NORM.manifold, HALF_NORM, np.zeros(2), SolverConfig())
    assert tr.n_iter == 0 and tr.status == "converged"
    tr = solve(HALF_NORM.manifold, HALF_NORM, np.zeros(2), SolverConfig(method="prox-inexact"))
    assert tr.n_iter == 0 and tr.status == "converged"


def test_sd_fixed_needs_lipschitz():
    with pytest.raises(ValueError, match="lipschitz"):
        steepest_descent(HALF_NORM.manifold, HALF_NORM, np.ones(2), SolverConfig(method="sd-fixed"))


def test_max_iters_status():
    tr = solve(HALF_NORM.manifold, PowerNorm(2, 4.0), np.ones(2), SolverConfig(max_iter=5, t_init=0.1))
    assert tr.status == "max-iters" and tr.n_iter == 5


def test_snapshots_follow_stride():
    tr = solve(HALF_NORM.manifold, EuclideanQuadratic(np.diag([1.0, 3.0])), np.ones(2),
               SolverConfig(snapshot_stride=3, alpha=0.9))
    assert sorted(tr.snapshots) == list(range(0, tr.n_iter + 1, 3)) or \
        sorted(tr.snapshots)[:-1] == list(range(0, tr.n_iter, 3))


def test_config_errors():
    errs = SolverConfig(method="sd-fixed", lipschitz=10.0, delta1=0.1, delta2=0.5).errors()
    assert any("L*delta1 + delta2 < 1" in e for e in errs)
    assert SolverConfig(alpha=1.5).errors()[0].startswith("alpha")
    errs = SolverConfig(method="prox-inexact", lambda_low=2.0, lambda_high=1.0, b=1.0).errors()
    assert any(e.startswith("lambda_low") for e in errs) and any(e.startswith("b:") for e in errs)
    assert SolverConfig(method="nope").errors()


def test_lambda_schedule():
    c = SolverConfig(method="prox-inexact", lambda_low=1.0, lambda_high=8.0, lambda_schedule="geometric",
                     lambda_period=4)
    lams = [c.lambda_at(k) for k in range(8)]
    np.testing.assert_allclose(lams[:4], [1, 2, 4, 8])
    assert lams[4:] == lams[:4]
    assert all(1.0 <= v <= 8.0 for v in lams)
    assert SolverConfig(lambda_low=3.0).lambda_at(17) == 3.0


def test_prox_step_quadratic_example():
    q = EuclideanQuadratic(np.eye(2), np.array([2.0, 0.0]))
    res = prox_inexact_step(q.manifold, q, QuasiDistance(q.manifold), np.zeros(2), lam=1.0, theta=1.0)
    np.testing.assert_allclose(res.point, [1.0, 0.0], atol=1e-6)


@pytest.mark.parametrize("b", [1.1, 1.5, 2.0])
def test_prox_step_recovers_exact_prox(b):
    q = EuclideanQuadratic(np.diag([1.0, 3.0]), np.array([2.0, -1.0]))
    x, lam = np.array([0.5, 0.5]), 1.0
    exact = np.linalg.solve(q.Q + lam * np.eye(2), q.Q @ q.center + lam * x)
    qd = QuasiDistance(q.manifold)
    slack = []
    for tol in (1e-3, 1e-6, 1e-10):
        res = prox_inexact_step(q.manifold, q, qd, x, lam, theta=1.0, b=b, inner_tol=tol)
        d = np.linalg.norm(res.point - x)
        assert q.value(res.point) + 0.5 * lam * d**2 <= q.value(x)
        assert res.w_norm <= b * lam * d
        slack.append(np.linalg.norm(res.point - exact))
    assert slack[-1] <= 1e-9
    assert slack[-1] <= slack[0]


def test_prox_step_critical_start():
    with pytest.raises(ValueError, match="noncritical"):
        prox_inexact_step(HALF_NORM.manifold, HALF_NORM, QuasiDistance(HALF_NORM.manifold), np.zeros(2), 1.0)


def test_prox_step_budget_exhausted():
    q = EuclideanQuadratic(np.diag([1.0, 100.0]))
    with pytest.raises(SubproblemError, match="inner solver failed"):
        prox_inexact_step(q.manifold, q, QuasiDistance(q.manifold), np.array([1.0, 1.0]), 1e-3,
                          inner_max_iter=1, inner_tol=1e-14)


@pytest.mark.parametrize("lam", [0.5, 1.0, 5.0])
def test_prox_iterates_follow_closed_form(lam):
    c = np.array([1.0, -2.0, 0.5])
    q = EuclideanQuadratic(np.eye(3), c)
    cfg = SolverConfig(method="prox-inexact", lambda_low=lam, theta=1.0, b=2.0, grad_tol=1e-8, snapshot_stride=1)
    tr = run_prox(q.manifold, q, QuasiDistance(q.manifold), np.array([4.0, 3.0, -2.0]), cfg)
    xs = [tr.snapshots[k] for k in sorted(tr.snapshots)]
    for a, b in zip(xs[:-1], xs[1:]):
        np.testing.assert_allclose(b, (c + lam * a) / (1 + lam), atol=1e-6)


def test_prox_karcher_midpoint(rng):
    P = SPD(3)
    c1, c2 = P.random_point(rng) + np.eye(3), P.random_point(rng) + np.eye(3)
    k = KarcherSPD([c1, c2])
    cfg = SolverConfig(method="prox-inexact", lambda_low=1.0, theta=0.5, grad_tol=1e-8)
    tr = run_prox(P, k, QuasiDistance(P), P.random_point(rng), cfg)
    assert tr.status == "converged"
    assert P.dist(tr.final_point, k.minimizers()[0]) <= 1e-6


def test_prox_rayleigh_eigenvector():
    r = RayleighSphere(random_symmetric(4, 5))
    cfg = SolverConfig(method="prox-inexact", lambda_low=1.0, lambda_high=3.0, lambda_schedule="geometric",
                       theta=0.5, grad_tol=1e-8)
    tr = run_prox(r.manifold, r, QuasiDistance(r.manifold), r.manifold.random_point(1), cfg)
    assert tr.status == "converged"
    assert r.eigenvector_alignment(tr.final_point) >= 1 - 1e-10


def test_prox_gauge_quadratic():
    q = EuclideanQuadratic(np.diag([1.0, 2.0, 0.5]), np.array([1.0, -1.0, 2.0]))
    qd = QuasiDistance(q.manifold, "gauge", w_plus=1.0, w_minus=3.0)
    cfg = SolverConfig(method="prox-inexact", lambda_low=1.0, theta=0.5, b=3.0, grad_tol=1e-9)
    tr = run_prox(q.manifold, q, qd, np.zeros(3), cfg)
    assert tr.status == "converged"
    np.testing.assert_allclose(tr.final_point, q.center, atol=1e-8)
    # D-steps are not plain distance steps
    assert np.max(np.abs(tr.qd_step - tr.dist_step)) > 1e-3
    s1, s2 = qd.equivalence_constants()
    assert np.all(tr.qd_step >= s1 * tr.dist_step - 1e-12)
    assert np.all(tr.qd_step <= s2 * tr.dist_step + 1e-12)


def _trace_cases():
    P = SPD(2)
    r = np.random.default_rng(9)
    k = KarcherSPD([P.random_point(r) + np.eye(2) for _ in range(3)])
    return [
        ("sd-armijo-rayleigh", RayleighSphere(random_symmetric(5, 2)), SolverConfig()),
        ("sd-armijo-power", PowerNorm(3, 3.0), SolverConfig(t_init=0.5, max_iter=300)),
        ("sd-fixed-quadratic", EuclideanQuadratic(np.diag([1.0, 2.0, 3.0])),
         SolverConfig(method="sd-fixed", lipschitz=3.0, delta1=0.1, delta2=0.5)),
        ("prox-karcher", k, SolverConfig(method="prox-inexact", theta=0.5, grad_tol=1e-6)),
    ]


@pytest.mark.parametrize("name,obj,cfg", _trace_cases(), ids=lambda v: v if isinstance(v, str) else "")
@settings(max_examples=15)
@given(seed=st.integers(0, 10**6))
def test_trace_invariants(name, obj, cfg, seed):
    M = obj.manifold
    x0 = M.random_point(np.random.default_rng(seed))
    tr = solve(M, obj, x0, cfg)
    n = tr.n_iter
    assert all(len(getattr(tr, a)) == n for a in ("f", "grad_norm", "step", "qd_step", "dist_step", "w_norm"))
    # strict decrease whenever the point moves
    moved = tr.qd_step > 0
    assert np.all(tr.f_next[moved] < tr.f[moved])
    if cfg.method == "sd-armijo":
        g2 = tr.grad_norm**2
        # Armijo pair: phi(t) = alpha t, and f_{k+1} <= f_k - phi(t_k) |g_k|^2
        assert np.all(tr.f_next <= tr.f - cfg.alpha * tr.step * g2 + 1e-12)
        # t_init = 1 makes H1 hold with a = alpha
        if cfg.t_init == 1.0:
            assert np.all(tr.f_next + cfg.alpha * tr.dist_step**2 <= tr.f + 1e-12)
    if cfg.method == "sd-fixed":
        L, d2 = cfg.lipschitz, cfg.delta2
        beta = d2 * L / (2 * (1 - d2))
        # fixed-step pair: phi(t) = beta t^2, and t_k >= delta1
        assert np.all(tr.f_next <= tr.f - beta * tr.step**2 * tr.grad_norm**2 + 1e-12)
        assert np.all(tr.step >= cfg.delta1)
    if cfg.method == "prox-inexact":
        a = 0.5 * cfg.theta * cfg.lambda_low
        assert np.all(tr.f_next + a * tr.qd_step**2 <= tr.f + 1e-12)
        assert np.all(tr.w_norm <= cfg.b * cfg.lam_hi * tr.qd_step + 1e-12)


def test_armijo_step_lower_bound_quadratics():
    for seed in range(20):
        r = np.random.default_rng(seed)
        lam = r.uniform(0.2, 6.0, 4)
        q = EuclideanQuadratic(np.diag(lam), r.standard_normal(4))
        for alpha in (0.1, 0.5, 0.9):
            tr = solve(q.manifold, q, r.standard_normal(4), SolverConfig(alpha=alpha))
            assert tr.step.min() >= min(1.0, (1 - alpha) / lam.max()) - 1e-12
