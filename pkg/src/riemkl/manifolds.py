"""Exact Riemannian geometry on three model manifolds.

Points and tangent vectors are plain numpy arrays in ambient coordinates:

* ``Euclidean(n)``: vectors of shape ``(n,)``.
* ``Sphere(n)``: unit vectors of shape ``(n,)``, the sphere S^{n-1}.
* ``SPD(m)``: symmetric positive definite ``(m, m)`` matrices with the
  affine-invariant metric ``<U, V>_X = tr(X^-1 U X^-1 V)``.

Most operations accept stacked inputs with leading batch axes, which keeps
large property checks vectorized.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ANTIPODAL_TOL = 1e-12
SPD_JITTER = 1e-3


class GeometryError(ValueError):
    """Raised when a geometric operation is undefined for its inputs."""


@dataclass(frozen=True)
class ManifoldDescriptor:
    kind: str
    n: int
    dim: int
    curvature: str
    m: int | None = None


def _swap(a):
    return np.swapaxes(a, -1, -2)


def sym(a):
    return 0.5 * (a + _swap(a))


def sym_fn(s, fn):
    """Apply a scalar function to a (batch of) symmetric matrix via eigh."""
    w, v = np.linalg.eigh(sym(s))
    return (v * fn(w)[..., None, :]) @ _swap(v)


def _sqrt_pair(x):
    w, v = np.linalg.eigh(sym(x))
    if np.any(w <= 0):
        raise GeometryError("matrix is not positive definite")
    r = np.sqrt(w)
    return (v * r[..., None, :]) @ _swap(v), (v / r[..., None, :]) @ _swap(v)


class Manifold:
    kind: str
    curvature: str

    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"dimension must be positive, got {n}")
        self.n = int(n)

    def __repr__(self):
        return f"{type(self).__name__}({self.n})"

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def point_shape(self) -> tuple[int, ...]:
        return (self.n,)

    @property
    def descriptor(self) -> ManifoldDescriptor:
        return ManifoldDescriptor(self.kind, self.n, self.dim, self.curvature)

    # vector-space style defaults, shared by Euclidean and Sphere
    def inner(self, x, u, v):
        self._check_base(x, u, v)
        return np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    def norm(self, x, v):
        return np.sqrt(np.maximum(self.inner(x, v, v), 0.0))

    def zero_tangent(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def _check_base(self, x, *vs):
        shape = np.shape(x)
        for v in vs:
            if np.shape(v)[-len(self.point_shape):] != shape[-len(self.point_shape):]:
                raise GeometryError(
                    f"tangent of shape {np.shape(v)} is not based at a point of shape {shape}"
                )

    def validate_point(self, x, tol: float = 1e-9) -> None:
        if np.shape(x) != self.point_shape:
            raise GeometryError(f"expected point of shape {self.point_shape}, got {np.shape(x)}")
        if not np.all(np.isfinite(x)):
            raise GeometryError("point has non-finite coordinates")

    def validate_tangent(self, x, v, tol: float = 1e-9) -> None:
        self._check_base(x, v)
        if not np.all(np.isfinite(v)):
            raise GeometryError("tangent has non-finite components")

    def tangent_basis(self, x) -> list[np.ndarray]:
        """Orthonormal basis of the tangent space at ``x`` (metric at ``x``)."""
        raise NotImplementedError

    def random_point(self, seed=None):
        raise NotImplementedError

    def random_tangent(self, x, seed=None):
        raise NotImplementedError

    def geodesic(self, x, v, t):
        return self.exp(x, t * np.asarray(v))


class Euclidean(Manifold):
    kind = "euclidean"
    curvature = "zero"

    @property
    def dim(self):
        return self.n

    def exp(self, x, v):
        return np.asarray(x, dtype=float) + np.asarray(v, dtype=float)

    def log(self, x, y):
        return np.asarray(y, dtype=float) - np.asarray(x, dtype=float)

    def dist(self, x, y):
        return np.linalg.norm(np.asarray(y) - np.asarray(x), axis=-1)

    def transport(self, x, y, v):
        return np.array(v, dtype=float)

    def project_tangent(self, x, g):
        return np.array(g, dtype=float)

    def tangent_basis(self, x):
        return list(np.eye(self.n))

    def random_point(self, seed=None):
        return np.random.default_rng(seed).standard_normal(self.n)

    def random_tangent(self, x, seed=None):
        return np.random.default_rng(seed).standard_normal(self.n)


class Sphere(Manifold):
    """Unit sphere in R^n with the round metric (intrinsic dimension n - 1)."""

    kind = "sphere"
    curvature = "positive"

    def __init__(self, n: int):
        if n < 2:
            raise ValueError("sphere needs ambient dimension >= 2")
        super().__init__(n)

    @property
    def dim(self):
        return self.n - 1

    def validate_point(self, x, tol=1e-9):
        super().validate_point(x)
        if abs(np.linalg.norm(x) - 1.0) > tol:
            raise GeometryError(f"point is off the sphere: |x| = {np.linalg.norm(x)!r}")

    def validate_tangent(self, x, v, tol=1e-9):
        super().validate_tangent(x, v)
        if abs(np.dot(x, v)) > tol * max(np.linalg.norm(v), 1.0):
            raise GeometryError("vector is not tangent to the sphere at x")

    def project_tangent(self, x, g):
        x = np.asarray(x, dtype=float)
        g = np.asarray(g, dtype=float)
        return g - np.sum(x * g, axis=-1, keepdims=True) * x

    def exp(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        safe = np.where(nv > 0, nv, 1.0)
        y = np.cos(nv) * x + np.where(nv > 0, np.sin(nv) / safe, 1.0) * v
        return y / np.linalg.norm(y, axis=-1, keepdims=True)

    def _angle(self, x, y):
        c = np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)
        u = y - c[..., None] * x
        nu = np.linalg.norm(u, axis=-1)
        # arctan2 keeps full relative accuracy for nearby points, where arccos does not
        return np.arctan2(nu, c), c, u, nu

    def _check_antipodal(self, c):
        if np.any(c <= -1.0 + ANTIPODAL_TOL):
            raise GeometryError("antipodal points: minimal geodesic is not unique")

    def log(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        theta, c, u, nu = self._angle(x, y)
        self._check_antipodal(c)
        scale = np.where(nu > 0, theta / np.where(nu > 0, nu, 1.0), 0.0)
        return scale[..., None] * u

    def dist(self, x, y):
        return self._angle(np.asarray(x, dtype=float), np.asarray(y, dtype=float))[0]

    def transport(self, x, y, v):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        v = np.asarray(v, dtype=float)
        theta, c, u, nu = self._angle(x, y)
        self._check_antipodal(c)
        if np.ndim(theta) == 0 and nu == 0:
            return v.copy()
        e = u / np.where(nu > 0, nu, 1.0)[..., None]
        ev = np.sum(e * v, axis=-1, keepdims=True)
        th = theta[..., None]
        w = v + ev * ((np.cos(th) - 1.0) * e - np.sin(th) * x)
        return self.project_tangent(y, w)

    def tangent_basis(self, x):
        _, _, vt = np.linalg.svd(np.asarray(x, dtype=float)[None, :])
        return list(vt[1:])

    def random_point(self, seed=None):
        z = np.random.default_rng(seed).standard_normal(self.n)
        return z / np.linalg.norm(z)

    def random_tangent(self, x, seed=None):
        return self.project_tangent(x, np.random.default_rng(seed).standard_normal(self.n))


class SPD(Manifold):
    """Symmetric positive definite m x m matrices, affine-invariant metric.

    This is a Hadamard manifold: exp and log are global diffeomorphisms and
    geodesics are unique, so no cut-locus handling is needed.
    """

    kind = "spd"
    curvature = "nonpositive"

    def __init__(self, m: int):
        super().__init__(m)
        self.m = self.n

    @property
    def dim(self):
        return self.m * (self.m + 1) // 2

    @property
    def point_shape(self):
        return (self.m, self.m)

    @property
    def descriptor(self):
        return ManifoldDescriptor(self.kind, self.m * self.m, self.dim, self.curvature, m=self.m)

    def validate_point(self, x, tol=1e-9):
        super().validate_point(x)
        x = np.asarray(x)
        scale = max(np.linalg.norm(x), 1.0)
        if np.linalg.norm(x - x.T) > tol * scale:
            raise GeometryError("matrix is not symmetric")
        if np.linalg.eigvalsh(sym(x))[0] <= 0:
            raise GeometryError("matrix is not positive definite")

    def validate_tangent(self, x, v, tol=1e-9):
        super().validate_tangent(x, v)
        v = np.asarray(v)
        if np.linalg.norm(v - v.T) > tol * max(np.linalg.norm(v), 1.0):
            raise GeometryError("tangent matrix is not symmetric")

    def inner(self, x, u, v):
        self._check_base(x, u, v)
        a = np.linalg.solve(x, u)
        b = np.linalg.solve(x, v)
        return np.einsum("...ij,...ji->...", a, b)

    def project_tangent(self, x, g):
        x = np.asarray(x, dtype=float)
        return sym(x @ sym(np.asarray(g, dtype=float)) @ x)

    def exp(self, x, v):
        s, si = _sqrt_pair(x)
        return sym(s @ sym_fn(si @ v @ si, np.exp) @ s)

    def log(self, x, y):
        s, si = _sqrt_pair(x)
        return sym(s @ sym_fn(si @ y @ si, np.log) @ s)

    def dist(self, x, y):
        _, si = _sqrt_pair(x)
        w = np.linalg.eigvalsh(sym(si @ np.asarray(y, dtype=float) @ si))
        return np.sqrt(np.sum(np.log(w) ** 2, axis=-1))

    def transport(self, x, y, v):
        # E = (Y X^-1)^{1/2} written through the congruence X^{1/2} (.) X^{-1/2}
        s, si = _sqrt_pair(x)
        e = s @ sym_fn(si @ y @ si, np.sqrt) @ si
        return sym(e @ v @ _swap(e))

    def tangent_basis(self, x):
        s, _ = _sqrt_pair(x)
        basis = []
        for i in range(self.m):
            for j in range(i, self.m):
                e = np.zeros((self.m, self.m))
                if i == j:
                    e[i, i] = 1.0
                else:
                    e[i, j] = e[j, i] = 1.0 / np.sqrt(2.0)
                basis.append(s @ e @ s)
        return basis

    def random_point(self, seed=None):
        a = np.random.default_rng(seed).standard_normal((self.m, self.m))
        return sym(a @ a.T) + SPD_JITTER * np.eye(self.m)

    def random_tangent(self, x, seed=None):
        return sym(np.random.default_rng(seed).standard_normal((self.m, self.m)))


MANIFOLDS = {"euclidean": Euclidean, "sphere": Sphere, "spd": SPD}


def make_manifold(kind: str, n: int) -> Manifold:
    """Build a manifold from its kind; ``n`` is the matrix side for ``spd``."""
    try:
        return MANIFOLDS[kind](n)
    except KeyError:
        raise ValueError(f"unknown manifold kind {kind!r}; expected one of {sorted(MANIFOLDS)}") from None
