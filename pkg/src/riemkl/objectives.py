"""Smooth test objectives with exact Riemannian gradients.

Every objective here is C^1, so its limiting subdifferential is the singleton
``{grad f(x)}`` and criticality means a vanishing Riemannian gradient.
"""
from __future__ import annotations

import warnings

import numpy as np

from .manifolds import SPD, Euclidean, Manifold, Sphere, sym_fn

LIPSCHITZ_SAFETY = 1.5


class CriticalityWarning(UserWarning):
    """Hessian requested at a point whose gradient does not vanish."""


class Objective:
    """Differentiable function on a manifold.

    Subclasses set ``manifold``, ``name``, ``lower_bound`` and optionally
    ``lipschitz`` (an analytic gradient Lipschitz constant) and ``f_star``
    (the known minimum value).
    """

    name = "objective"
    lipschitz: float | None = None
    f_star: float | None = None
    lower_bound: float = -np.inf

    def __init__(self, manifold: Manifold):
        self.manifold = manifold

    def __repr__(self):
        return f"{type(self).__name__}(on={self.manifold!r})"

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def minimizers(self) -> list[np.ndarray]:
        """Known global minimizers (empty when unknown)."""
        return []

    def oracle_distance(self, x) -> float | None:
        mins = self.minimizers()
        if not mins:
            return None
        return float(min(self.manifold.dist(x, m) for m in mins))

    def grad_norm(self, x) -> float:
        return float(self.manifold.norm(x, self.gradient(x)))

    def _check(self, x):
        if np.shape(x) != self.manifold.point_shape:
            raise ValueError(
                f"{self.name}: point of shape {np.shape(x)} is not on {self.manifold!r}"
            )


class EuclideanQuadratic(Objective):
    """f(x) = 1/2 (x - c)^T Q (x - c) with Q symmetric positive semidefinite."""

    name = "quadratic"

    def __init__(self, Q, center=None):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T):
            raise ValueError("Q must be a symmetric square matrix")
        eig = np.linalg.eigvalsh(Q)
        if eig[0] < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        super().__init__(Euclidean(Q.shape[0]))
        self.Q = Q
        self.center = np.zeros(Q.shape[0]) if center is None else np.asarray(center, dtype=float)
        if self.center.shape != (Q.shape[0],):
            raise ValueError("center dimension does not match Q")
        self.eigenvalues = eig
        self.lipschitz = float(eig[-1])
        self.f_star = 0.0
        self.lower_bound = 0.0

    def value(self, x):
        self._check(x)
        r = x - self.center
        return 0.5 * float(r @ self.Q @ r)

    def gradient(self, x):
        self._check(x)
        return self.Q @ (x - self.center)

    def minimizers(self):
        if self.eigenvalues[0] <= 0:
            return []
        return [self.center.copy()]


class PowerNorm(Objective):
    """f(x) = |x|^p on R^n, p >= 2; Lojasiewicz exponent (p - 1)/p at 0."""

    name = "power"

    def __init__(self, n: int, p: float = 2.0):
        if p < 2:
            raise ValueError("PowerNorm needs p >= 2")
        super().__init__(Euclidean(n))
        self.p = float(p)
        self.f_star = 0.0
        self.lower_bound = 0.0
        if self.p == 2.0:
            self.lipschitz = 2.0

    def value(self, x):
        self._check(x)
        return float(np.linalg.norm(x) ** self.p)

    def gradient(self, x):
        self._check(x)
        r = np.linalg.norm(x)
        if r == 0.0:
            return np.zeros_like(x, dtype=float)
        return self.p * r ** (self.p - 2) * np.asarray(x, dtype=float)

    def minimizers(self):
        return [np.zeros(self.manifold.n)]


class RayleighSphere(Objective):
    """f(x) = x^T A x on the unit sphere; Morse when A has distinct eigenvalues."""

    name = "rayleigh"

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
            raise ValueError("A must be a symmetric square matrix")
        super().__init__(Sphere(A.shape[0]))
        self.A = 0.5 * (A + A.T)
        self.eigenvalues, self.eigenvectors = np.linalg.eigh(self.A)
        self.f_star = float(self.eigenvalues[0])
        self.lower_bound = self.f_star

    def value(self, x):
        self._check(x)
        return float(x @ self.A @ x)

    def gradient(self, x):
        self._check(x)
        ax = self.A @ x
        return 2.0 * (ax - float(x @ ax) * x)

    def minimizers(self):
        if self.eigenvalues.size > 1 and np.isclose(self.eigenvalues[0], self.eigenvalues[1]):
            return []
        v = self.eigenvectors[:, 0]
        return [v.copy(), -v]

    def eigenvector_alignment(self, x) -> float:
        """Largest |<x, e_i>| over the unit eigenvectors of A."""
        return float(np.max(np.abs(self.eigenvectors.T @ x)))


class KarcherSPD(Objective):
    """Weighted Frechet (Karcher) variance on SPD matrices.

    f(X) = 1/2 sum_i w_i d^2(X, C_i); its gradient is -sum_i w_i log_X(C_i).
    """

    name = "karcher"

    def __init__(self, anchors, weights=None):
        anchors = [np.asarray(c, dtype=float) for c in anchors]
        if not anchors:
            raise ValueError("KarcherSPD needs at least one anchor")
        m = anchors[0].shape[0]
        super().__init__(SPD(m))
        for c in anchors:
            self.manifold.validate_point(c)
        if weights is None:
            weights = np.full(len(anchors), 1.0 / len(anchors))
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(anchors),) or np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
            raise ValueError("weights must be nonnegative, one per anchor, summing to 1")
        self.anchors = anchors
        self.weights = weights
        self.lower_bound = 0.0
        if len(anchors) <= 2:
            self.f_star = self.value(self.minimizers()[0])

    def value(self, x):
        self._check(x)
        return 0.5 * float(sum(w * self.manifold.dist(x, c) ** 2 for w, c in zip(self.weights, self.anchors)))

    def gradient(self, x):
        self._check(x)
        g = np.zeros_like(x, dtype=float)
        for w, c in zip(self.weights, self.anchors):
            if w:
                g -= w * self.manifold.log(x, c)
        return g

    def minimizers(self):
        if len(self.anchors) == 1:
            return [self.anchors[0].copy()]
        if len(self.anchors) == 2:
            return [spd_geodesic_point(self.anchors[0], self.anchors[1], self.weights[1])]
        return []


def spd_geodesic_point(c1, c2, t):
    """C1^{1/2} (C1^{-1/2} C2 C1^{-1/2})^t C1^{1/2}, the point at fraction t of the geodesic."""
    s = sym_fn(c1, np.sqrt)
    si = sym_fn(c1, lambda w: 1.0 / np.sqrt(w))
    return s @ sym_fn(si @ c2 @ si, lambda w: w**t) @ s


def _sample_ball(manifold: Manifold, center, radius, rng):
    basis = manifold.tangent_basis(center)
    coef = rng.standard_normal(len(basis))
    coef /= np.linalg.norm(coef)
    r = radius * rng.uniform() ** (1.0 / len(basis))
    return manifold.exp(center, r * sum(c * b for c, b in zip(coef, basis)))


def lipschitz_estimate(obj: Objective, center=None, radius: float = 1.0, n_samples: int = 200,
                       seed=None, use_analytic: bool = True, power_iters: int = 3) -> float:
    """Upper estimate of the gradient Lipschitz constant on a geodesic ball.

    Returns the analytic constant when the objective provides one. Otherwise
    samples pairs (x, y) with x in ``B(center, radius)`` and takes
    ``max |grad f(y) - P_{x->y} grad f(x)| / d(x, y)`` inflated by a 1.5
    safety factor. The direction from x to y is sharpened by a few power
    iterations on finite-difference Hessian products, so the pairs probe the
    steepest gradient change instead of a random one.
    """
    if radius <= 0:
        raise ValueError("degenerate region: radius must be positive")
    if use_analytic and obj.lipschitz is not None:
        return float(obj.lipschitz)
    M = obj.manifold
    rng = np.random.default_rng(seed)
    if center is None:
        center = M.random_point(rng)
    pair_radius = min(radius, 0.5 * np.pi) if isinstance(M, Sphere) else radius
    best = 0.0
    for _ in range(n_samples):
        x = _sample_ball(M, center, radius, rng)
        gx = obj.gradient(x)
        v = _steep_direction(obj, x, gx, rng, power_iters)
        # small separations resolve the local (Hessian-scale) constant
        y = M.exp(x, pair_radius * rng.uniform() ** 2 * v)
        d = float(M.dist(x, y))
        if d < 1e-8:
            continue
        diff = obj.gradient(y) - M.transport(x, y, gx)
        best = max(best, float(M.norm(y, diff)) / d)
    return LIPSCHITZ_SAFETY * best


def _steep_direction(obj, x, gx, rng, iters, eps=1e-5):
    """Unit tangent at x, refined by power iteration on finite-difference Hessian products."""
    M = obj.manifold
    basis = M.tangent_basis(x)
    v = sum(c * b for c, b in zip(rng.standard_normal(len(basis)), basis))
    v = v / M.norm(x, v)
    for _ in range(iters):
        y = M.exp(x, eps * v)
        w = M.transport(y, x, obj.gradient(y)) - gx
        nw = M.norm(x, w)
        if not nw > 0:
            break
        v = w / nw
    return v


def hessian_spectrum(obj: Objective, x, h: float | None = None, crit_tol: float = 1e-6) -> np.ndarray:
    """Eigenvalues of the Riemannian Hessian by central differences of the gradient.

    H[i, j] = <grad f(exp_x(h e_j)) - grad f(exp_x(-h e_j)), P e_i> / (2h) in an
    orthonormal tangent basis {e_i}, then symmetrized. Emits
    ``CriticalityWarning`` when x is not (near) critical, since the
    gradient-transport Hessian is only intrinsic at critical points.
    """
    M = obj.manifold
    gn = obj.grad_norm(x)
    if gn > crit_tol:
        warnings.warn(f"|grad f(x)| = {gn:.3e} exceeds {crit_tol:g}; x is not critical",
                      CriticalityWarning, stacklevel=2)
    if h is None:
        h = 1e-4 * max(1.0, float(np.linalg.norm(x)))
    basis = M.tangent_basis(x)
    k = len(basis)
    H = np.empty((k, k))
    for j, ej in enumerate(basis):
        yp, ym = M.exp(x, h * ej), M.exp(x, -h * ej)
        gp, gm = obj.gradient(yp), obj.gradient(ym)
        for i, ei in enumerate(basis):
            H[i, j] = (M.inner(yp, gp, M.transport(x, yp, ei)) - M.inner(ym, gm, M.transport(x, ym, ei))) / (2 * h)
    return np.linalg.eigvalsh(0.5 * (H + H.T))


def random_symmetric(n: int, seed=None) -> np.ndarray:
    a = np.random.default_rng(seed).standard_normal((n, n))
    return 0.5 * (a + a.T)
