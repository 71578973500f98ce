"""Univariate B-spline bases on open-uniform knots and their roughness penalties."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from ..exceptions import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BSplineBasis:
    lo: float
    hi: float
    K: int = 8
    degree: int = 3

    def __post_init__(self):
        if self.hi <= self.lo:
            raise ConfigError("basis domain needs hi > lo")
        if self.degree < 1 or self.K < self.degree + 1:
            raise ConfigError(f"need degree >= 1 and K >= degree+1, got K={self.K}, degree={self.degree}")

    @property
    def knots(self) -> np.ndarray:
        p = self.degree
        interior = np.linspace(self.lo, self.hi, self.K - p + 1)[1:-1]
        return np.r_[np.full(p + 1, float(self.lo)), interior, np.full(p + 1, float(self.hi))]

    def greville(self) -> np.ndarray:
        """Knot averages: coefficients ``a + b * greville`` reproduce ``a + b t``."""
        t, p = self.knots, self.degree
        return np.array([t[k + 1:k + p + 1].mean() for k in range(self.K)])

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "K": self.K, "degree": self.degree}

    @classmethod
    def from_dict(cls, d: dict) -> "BSplineBasis":
        return cls(float(d["lo"]), float(d["hi"]), int(d["K"]), int(d["degree"]))


def bspline_eval(basis: BSplineBasis, t) -> np.ndarray:
    """Basis values at ``t``; returns shape ``t.shape + (K,)``.

    Points outside the domain are clamped to its boundary.
    """
    t = np.asarray(t, dtype=np.float64)
    flat = t.ravel()
    out_of_range = (flat < basis.lo) | (flat > basis.hi)
    if out_of_range.any():
        logger.debug("clamping %d of %d points to [%g, %g]", int(out_of_range.sum()), flat.size,
                     basis.lo, basis.hi)
        flat = np.clip(flat, basis.lo, basis.hi)
    B = BSpline.design_matrix(flat, basis.knots, basis.degree).toarray()
    return B.reshape(t.shape + (basis.K,))


def bspline_derivative(basis: BSplineBasis, t, order: int) -> np.ndarray:
    t = np.clip(np.asarray(t, dtype=np.float64), basis.lo, basis.hi)
    spl = BSpline(basis.knots, np.eye(basis.K), basis.degree, extrapolate=False)
    return np.nan_to_num(spl.derivative(order)(t))


def penalty_matrix(basis: BSplineBasis, order: int = 2) -> np.ndarray:
    """``P[k, l] = integral of B_k^(order) B_l^(order)`` over the domain.

    Gauss-Legendre on each knot span with enough nodes to integrate the
    piecewise-polynomial integrand exactly.
    """
    if order > basis.degree:
        return np.zeros((basis.K, basis.K))
    n_nodes = max(basis.degree - order + 1, 1)
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    edges = np.unique(basis.knots)
    P = np.zeros((basis.K, basis.K))
    for a, b in zip(edges[:-1], edges[1:]):
        nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
        D = bspline_derivative(basis, nodes, order)
        P += (D.T * (0.5 * (b - a) * w)) @ D
    return 0.5 * (P + P.T)
