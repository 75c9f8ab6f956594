"""Riemannian descent methods with Kurdyka-Lojasiewicz convergence diagnostics."""
from .manifolds import SPD, Euclidean, GeometryError, Manifold, Sphere, make_manifold
from .objectives import (EuclideanQuadratic, KarcherSPD, Objective, PowerNorm, RayleighSphere,
                         hessian_spectrum, lipschitz_estimate)
from .quasimetric import QuasiDistance
from .solvers import DescentTrace, SolverConfig, solve
from .diagnostics import (KLCertificate, check_H1, check_H2, diagnose, estimate_kl_exponent,
                          lemma51_bound, lemma52_monitor, morse_certificate, noncritical_certificate,
                          summability)

__version__ = "0.1.0"

__all__ = [
    "SPD", "Euclidean", "GeometryError", "Manifold", "Sphere", "make_manifold",
    "EuclideanQuadratic", "KarcherSPD", "Objective", "PowerNorm", "RayleighSphere",
    "hessian_spectrum", "lipschitz_estimate", "QuasiDistance",
    "DescentTrace", "SolverConfig", "solve",
    "KLCertificate", "check_H1", "check_H2", "diagnose", "estimate_kl_exponent",
    "lemma51_bound", "lemma52_monitor", "morse_certificate", "noncritical_certificate", "summability",
]
