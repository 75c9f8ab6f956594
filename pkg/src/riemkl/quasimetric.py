"""Quasi-distances: D(x, y) = 0 = D(y, x) iff x = y, triangle inequality, no symmetry.

All variants here are sandwiched by the Riemannian distance,
``s1 d(x, y) <= D(x, y) <= s2 d(x, y)``, which is what makes summable
D-steps imply convergence on a complete manifold.
"""
from __future__ import annotations

import numpy as np

from .manifolds import Euclidean, Manifold

VARIANTS = ("riemannian", "scaled", "gauge")


class QuasiDistance:
    """A quasi-distance on ``manifold``.

    Parameters
    ----------
    manifold : Manifold
    kind : {"riemannian", "scaled", "gauge"}
    scale : float
        Factor ``c`` of the scaled Riemannian distance.
    w_plus, w_minus : array_like
        Positive per-coordinate weights of the asymmetric gauge
        ``rho(u) = sqrt(sum (w+_i u_i^+)^2 + (w-_i u_i^-)^2)`` with
        ``D(x, y) = rho(y - x)``. Euclidean manifolds only.
    """

    def __init__(self, manifold: Manifold, kind: str = "riemannian", scale: float = 1.0,
                 w_plus=None, w_minus=None):
        if kind not in VARIANTS:
            raise ValueError(f"unknown quasi-distance {kind!r}; expected one of {VARIANTS}")
        self.manifold = manifold
        self.kind = kind
        self.scale = float(scale) if kind == "scaled" else 1.0
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        self.w_plus = self.w_minus = None
        if kind == "gauge":
            if not isinstance(manifold, Euclidean):
                raise ValueError("the asymmetric gauge is only defined on Euclidean manifolds")
            wp = np.broadcast_to(np.asarray(w_plus, dtype=float), (manifold.n,)).copy()
            wm = np.broadcast_to(np.asarray(w_minus, dtype=float), (manifold.n,)).copy()
            if np.any(wp <= 0) or np.any(wm <= 0):
                raise ValueError("gauge weights must be positive")
            self.w_plus, self.w_minus = wp, wm

    def __repr__(self):
        if self.kind == "gauge":
            return f"QuasiDistance(gauge, w+={self.w_plus.tolist()}, w-={self.w_minus.tolist()})"
        if self.kind == "scaled":
            return f"QuasiDistance(scaled, c={self.scale})"
        return "QuasiDistance(riemannian)"

    @property
    def is_symmetric(self) -> bool:
        return self.kind != "gauge" or bool(np.array_equal(self.w_plus, self.w_minus))

    def __call__(self, x, y):
        return self.distance(x, y)

    def distance(self, x, y):
        if self.kind == "gauge":
            u = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
            pos, neg = np.maximum(u, 0.0), np.maximum(-u, 0.0)
            return np.sqrt(np.sum((self.w_plus * pos) ** 2 + (self.w_minus * neg) ** 2, axis=-1))
        return self.scale * self.manifold.dist(x, y)

    def equivalence_constants(self) -> tuple[float, float]:
        if self.kind == "gauge":
            w = np.concatenate([self.w_plus, self.w_minus])
            return float(w.min()), float(w.max())
        return self.scale, self.scale

    def sq_grad_y(self, x, y):
        """Riemannian gradient of ``y -> D(x, y)^2``."""
        if self.kind == "gauge":
            u = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
            return 2.0 * (self.w_plus**2 * np.maximum(u, 0.0) - self.w_minus**2 * np.maximum(-u, 0.0))
        return -2.0 * self.scale**2 * self.manifold.log(y, x)

    def reversed(self) -> "QuasiDistance":
        """The quasi-distance ``(x, y) -> D(y, x)``."""
        if self.kind != "gauge":
            return self
        return QuasiDistance(self.manifold, "gauge", w_plus=self.w_minus, w_minus=self.w_plus)
