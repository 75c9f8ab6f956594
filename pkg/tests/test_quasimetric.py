import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riemkl.manifolds import SPD, Euclidean, Sphere
from riemkl.quasimetric import QuasiDistance

E1, E2, _ = np.eye(3)


def gauge(n=2, wp=2.0, wm=1.0):
    return QuasiDistance(Euclidean(n), "gauge", w_plus=wp, w_minus=wm)


def test_identity():
    for q in (QuasiDistance(Sphere(3)), QuasiDistance(Sphere(3), "scaled", 3.0)):
        assert q(E1, E1) == 0
    assert gauge()(np.ones(2), np.ones(2)) == 0


def test_gauge_asymmetry_example():
    q = gauge()
    assert q(np.zeros(2), np.array([1.0, 0])) == pytest.approx(2.0)
    assert q(np.array([1.0, 0]), np.zeros(2)) == pytest.approx(1.0)
    assert not q.is_symmetric
    assert gauge(wp=1.5, wm=1.5).is_symmetric


def test_scaled_example():
    assert QuasiDistance(Sphere(3), "scaled", 3.0)(E1, E2) == pytest.approx(1.5 * np.pi)


def test_equivalence_constants():
    assert QuasiDistance(SPD(2)).equivalence_constants() == (1.0, 1.0)
    assert QuasiDistance(SPD(2), "scaled", 3.0).equivalence_constants() == (3.0, 3.0)
    q = QuasiDistance(Euclidean(2), "gauge", w_plus=[2.0, 2.0], w_minus=[1.0, 1.0])
    assert q.equivalence_constants() == (1.0, 2.0)


def test_gauge_constants_sampled(rng):
    # sampled ratios D/d fill out [s1, s2]
    q = QuasiDistance(Euclidean(2), "gauge", w_plus=[2.0, 2.0], w_minus=[1.0, 1.0])
    x, y = rng.standard_normal((2, 10_000, 2))
    r = q(x, y) / np.linalg.norm(y - x, axis=-1)
    assert r.min() >= 1.0 - 1e-12 and r.max() <= 2.0 + 1e-12
    assert r.min() < 1.01 and r.max() > 1.99


def test_invalid_specs():
    with pytest.raises(ValueError, match="Euclidean"):
        QuasiDistance(Sphere(3), "gauge", w_plus=1.0, w_minus=1.0)
    with pytest.raises(ValueError):
        gauge(wp=0.0)
    with pytest.raises(ValueError):
        QuasiDistance(Sphere(3), "scaled", -1.0)
    with pytest.raises(ValueError):
        QuasiDistance(Sphere(3), "taxicab")


def test_sq_grad_examples():
    q = QuasiDistance(Euclidean(2))
    np.testing.assert_allclose(q.sq_grad_y(np.array([2.0, 0]), np.zeros(2)), [-4.0, 0])
    np.testing.assert_allclose(q.sq_grad_y(np.ones(2), np.ones(2)), 0)
    g1 = QuasiDistance(Euclidean(1), "gauge", w_plus=2.0, w_minus=1.0)
    np.testing.assert_allclose(g1.sq_grad_y(np.zeros(1), np.ones(1)), [8.0])
    s = QuasiDistance(Sphere(3), "scaled", 3.0)
    np.testing.assert_allclose(s.sq_grad_y(E1, E1), 0)


def _fd_sq_grad(q, x, y, h=1e-6):
    M = q.manifold
    g = np.zeros_like(y)
    for e in M.tangent_basis(y):
        d = (q(x, M.exp(y, h * e)) ** 2 - q(x, M.exp(y, -h * e)) ** 2) / (2 * h)
        g = g + d * e
    return g


def test_sq_grad_matches_finite_differences(rng):
    for q in (QuasiDistance(Sphere(4), "scaled", 2.0), QuasiDistance(SPD(2)),
              QuasiDistance(Euclidean(3), "gauge", w_plus=[1.0, 2.0, 3.0], w_minus=0.5)):
        M = q.manifold
        for _ in range(5):
            x, y = M.random_point(rng), M.random_point(rng)
            if isinstance(M, SPD):
                x, y = x + np.eye(2), y + np.eye(2)
            if isinstance(M, Sphere):
                y = M.exp(x, 1.2 * M.log(x, y) / max(M.dist(x, y), 1e-9))
            g = q.sq_grad_y(x, y)
            fd = _fd_sq_grad(q, x, y)
            # compare as tangent vectors through the metric
            assert M.norm(y, g - fd) <= 1e-6 * max(1.0, M.norm(y, g))


def test_reversed_swaps_arguments(rng):
    q = gauge(3, wp=[1.0, 2.0, 3.0], wm=[0.5, 4.0, 1.0])
    x, y = rng.standard_normal((2, 3))
    assert q.reversed()(x, y) == pytest.approx(q(y, x))
    s = QuasiDistance(Sphere(3))
    assert s.reversed() is s


def _variants():
    return [
        ("riemannian-sphere", QuasiDistance(Sphere(3))),
        ("scaled-spd", QuasiDistance(SPD(2), "scaled", 0.5)),
        ("gauge", QuasiDistance(Euclidean(3), "gauge", w_plus=[1.0, 2.0, 0.5], w_minus=[3.0, 1.0, 1.0])),
    ]


@pytest.mark.parametrize("name,q", _variants())
def test_continuity_in_first_argument(name, q, rng):
    M = q.manifold
    s2 = q.equivalence_constants()[1]
    for _ in range(200):
        x1, x2, y = (M.random_point(rng) for _ in range(3))
        assert abs(q(x1, y) - q(x2, y)) <= s2 * M.dist(x1, x2) + 1e-10


@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_gauge_subadditive(vals):
    u, v = np.array(vals[:3]), np.array(vals[3:])
    q = QuasiDistance(Euclidean(3), "gauge", w_plus=[1.0, 2.0, 0.5], w_minus=[3.0, 1.0, 1.0])
    rho = lambda w: q(np.zeros(3), w)
    assert rho(u + v) <= rho(u) + rho(v) + 1e-12
    # componentwise positive parts are subadditive
    assert np.all(np.maximum(u + v, 0) <= np.maximum(u, 0) + np.maximum(v, 0) + 1e-15)
