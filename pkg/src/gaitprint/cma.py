"""Correlation and multiplicity adjusted (CMA) confidence intervals.

The adjusted critical value ``q`` is the ``1 - alpha`` quantile of
``max_g |Z_g|`` for ``Z ~ N(0, C)``, where ``C`` is the correlation matrix of
the coefficient estimates. It is estimated by seeded Monte Carlo.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from ._parallel import Parallel, delayed, resolve_jobs
from .exceptions import ConfigError, DataError
from .glm import LogisticFit
from .gridcells import CellIndex, GridSpec

logger = logging.getLogger(__name__)

CHUNK = 2 ** 15


def correlation_from_cov(cov, names: Sequence[str] | None = None) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DataError("covariance must be square")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-300):
        raise DataError("covariance is not symmetric")
    var = np.diag(cov)
    bad = np.flatnonzero(var <= 0)
    if bad.size:
        which = names[bad[0]] if names is not None else int(bad[0])
        raise DataError(f"non-positive variance for coefficient {which}")
    sd = np.sqrt(var)
    C = cov / np.outer(sd, sd)
    np.fill_diagonal(C, 1.0)
    return C


def symmetric_sqrt(C: np.ndarray) -> np.ndarray:
    """Symmetric square root, clipping negative eigenvalues to zero."""
    if np.count_nonzero(C - np.diag(np.diag(C))) == 0:
        return np.diag(np.sqrt(np.clip(np.diag(C), 0, None)))
    w, V = np.linalg.eigh(C)
    if w.min() < -1e-10 * max(w.max(), 1.0):
        logger.warning("correlation matrix not PSD (min eigenvalue %.3g); clipping to 0", w.min())
    w = np.clip(w, 0, None)
    return (V * np.sqrt(w)) @ V.T


def _chunk_maxabs(L: np.ndarray, seed: int, index: int, m: int) -> np.ndarray:
    # counter-based substream per chunk: result independent of scheduling
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))
    W = rng.standard_normal((L.shape[0], m))
    return np.abs(L @ W).max(axis=0)


def equicoordinate_quantile(C, alpha: float = 0.05, n_mc: int = 2_000_000, seed: int = 0,
                            n_jobs: int | None = 1) -> tuple[float, float]:
    """Monte Carlo ``q`` with ``P(max_g |Z_g| <= q) = 1 - alpha``, and its standard error.

    Draws for coordinate ``g`` come from the ``g``-th row of each chunk's
    standard-normal block, so for diagonal ``C`` the draws of a smaller problem
    are a coordinate subset of a larger one under the same seed.
    """
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    if n_mc < 100:
        raise ConfigError("n_mc must be at least 100")
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    if C.shape[0] != C.shape[1]:
        raise DataError("correlation matrix must be square")
    L = symmetric_sqrt(0.5 * (C + C.T))
    sizes = [min(CHUNK, n_mc - start) for start in range(0, n_mc, CHUNK)]
    parts = Parallel(n_jobs=resolve_jobs(n_jobs), prefer="threads")(
        delayed(_chunk_maxabs)(L, seed, i, m) for i, m in enumerate(sizes))
    maxabs = np.concatenate(parts)
    p = 1.0 - alpha
    q = float(np.quantile(maxabs, p))
    delta = math.sqrt(p * (1 - p) / n_mc)
    lo, hi = np.quantile(maxabs, [max(p - delta, 0.0), min(p + delta, 1.0)])
    return q, float(hi - lo) / 2.0


@dataclass
class CmaResult:
    subject: str
    alpha: float
    q: float
    z: float
    mc_se: float
    names: list[str]
    estimates: np.ndarray
    se: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    significant: list[str]
    unadjusted_significant: list[str]
    converged: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("estimates", "se", "lower", "upper"):
            d[k] = [float(v) for v in d[k]]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "CmaResult":
        d = dict(d)
        for k in ("estimates", "se", "lower", "upper"):
            d[k] = np.asarray(d[k], dtype=np.float64)
        return cls(**d)


def cma_intervals(fit: LogisticFit, alpha: float = 0.05, n_mc: int = 2_000_000, seed: int = 0,
                  n_jobs: int | None = 1) -> CmaResult:
    """Adjusted and unadjusted intervals for the non-intercept coefficients.

    The Monte Carlo estimate is floored at the univariate critical value,
    which the exact quantile can never fall below.
    """
    if not fit.converged:
        logger.warning("CMA on non-converged fit for %r", fit.target)
    est = np.asarray(fit.beta[1:], dtype=np.float64)
    cov = np.asarray(fit.cov[1:, 1:], dtype=np.float64)
    C = correlation_from_cov(cov, fit.column_names)
    se = np.sqrt(np.diag(cov))
    z = float(norm.ppf(1 - alpha / 2))
    q, mc_se = equicoordinate_quantile(C, alpha, n_mc, seed, n_jobs)
    q = max(q, z)
    lower, upper = est - q * se, est + q * se
    sig = [n for n, lo, hi in zip(fit.column_names, lower, upper) if lo > 0 or hi < 0]
    unadj = [n for n, b, s in zip(fit.column_names, est, se) if b - z * s > 0 or b + z * s < 0]
    return CmaResult(fit.target, alpha, q, z, mc_se, list(fit.column_names), est, se,
                     lower, upper, sig, unadj, bool(fit.converged))


def fingerprint_report(results: Sequence[CmaResult], grid: GridSpec,
                       adjusted: bool = True) -> dict[str, dict[int, np.ndarray]]:
    """Per subject and lag, an (n_side, n_side) matrix of estimates, NaN outside significant cells.

    Row ``r`` of each matrix is the value-axis band, column ``c`` the lagged-value band.
    """
    n = grid.n_side
    out: dict[str, dict[int, np.ndarray]] = {}
    for res in results:
        panels = {u: np.full((n, n), np.nan) for u in grid.lags}
        keep = set(res.significant if adjusted else res.unadjusted_significant)
        for name, b in zip(res.names, res.estimates):
            if name in keep:
                cell = CellIndex.parse(name)
                if cell.lag not in panels:
                    raise DataError(f"cell {name} does not belong to the grid")
                panels[cell.lag][cell.row, cell.col] = b
        out[res.subject] = panels
    return out
