"""Lag-pair matrices and the collapsed tensor-spline design.

For a frame ``v(1..S)`` every ordered pair ``a < b`` contributes one column:
lagged value ``v(a)``, value ``v(b)`` and lag ``b - a``. Columns are blocked by
``a``: the first ``S-1`` columns pair ``v(1)`` with ``v(2..S)``, the next
``S-2`` pair ``v(2)`` with ``v(3..S)``, and so on. With constant Riemann
weights the double integral over (s, u) becomes a weighted sum over columns,
so each second reduces to a vector of ``K_d * K_v * K_u`` coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from ..exceptions import ConfigError, DataError
from ..ingest import SubjectSeries
from .basis import BSplineBasis, bspline_eval


@lru_cache(maxsize=16)
def pair_layout(S: int, lag_stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """0-based (earlier, later) sample indices of every column."""
    if S < 2:
        raise ConfigError("S must be at least 2")
    if lag_stride < 1:
        raise ConfigError("lag_stride must be at least 1")
    first, second = [], []
    for a in range(S - 1):
        b = np.arange(a + 1, S)
        b = b[(b - a - 1) % lag_stride == 0]
        first.append(np.full(len(b), a))
        second.append(b)
    first, second = np.concatenate(first), np.concatenate(second)
    first.flags.writeable = False
    second.flags.writeable = False
    return first, second


@dataclass
class DSUMatrices:
    subject_id: str
    js: list[int]
    D: np.ndarray
    S_mat: np.ndarray
    U: np.ndarray
    lmat: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.D.shape


def build_dsu_matrices(series: SubjectSeries, lag_stride: int = 1) -> DSUMatrices:
    if not series.frames:
        raise DataError(f"subject {series.subject_id} has no frames")
    V = series.matrix()
    first, second = pair_layout(V.shape[1], lag_stride)
    L = len(first)
    U = np.broadcast_to((second - first).astype(np.float64), (V.shape[0], L)).copy()
    return DSUMatrices(series.subject_id, [f.j for f in series.frames], V[:, first], V[:, second],
                       U, np.full((V.shape[0], L), 1.0 / L))


@dataclass
class TensorBases:
    d: BSplineBasis
    v: BSplineBasis
    u: BSplineBasis

    @property
    def n_coef(self) -> int:
        return self.d.K * self.v.K * self.u.K

    @classmethod
    def default(cls, S: int, K: int = 8, degree: int = 3, value_range=(0.0, 3.0)) -> "TensorBases":
        lo, hi = value_range
        return cls(BSplineBasis(lo, hi, K, degree), BSplineBasis(lo, hi, K, degree),
                   BSplineBasis(1.0, float(S - 1), K, degree))

    def to_dict(self) -> dict:
        return {"d": self.d.to_dict(), "v": self.v.to_dict(), "u": self.u.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TensorBases":
        return cls(*(BSplineBasis.from_dict(d[k]) for k in ("d", "v", "u")))


@dataclass
class TensorDesign:
    C: np.ndarray
    index: list[tuple[str, int]]


def tensor_design(dsu: DSUMatrices, bases: TensorBases, chunk: int = 16) -> TensorDesign:
    """Collapse lag-pair matrices into per-second tensor-spline coefficients.

    ``C[i, (a, b, c)] = sum_l lmat[i, l] Bd_a(D[i, l]) Bv_b(S[i, l]) Bu_c(U[i, l])``
    with columns ordered ``a`` (lagged value) slowest, ``c`` (lag) fastest.
    """
    shapes = {dsu.D.shape, dsu.S_mat.shape, dsu.U.shape, dsu.lmat.shape}
    if len(shapes) != 1:
        raise DataError(f"inconsistent D/S/U/lmat shapes {sorted(shapes)}")
    n, L = dsu.D.shape
    Kd, Kv, Ku = bases.d.K, bases.v.K, bases.u.K
    C = np.empty((n, Kd * Kv * Ku))
    for lo in range(0, n, chunk):
        sl = slice(lo, min(lo + chunk, n))
        Bd = bspline_eval(bases.d, dsu.D[sl]) * dsu.lmat[sl][..., None]
        Bv = bspline_eval(bases.v, dsu.S_mat[sl])
        Bu = bspline_eval(bases.u, dsu.U[sl])
        kr = (Bv[..., :, None] * Bu[..., None, :]).reshape(Bv.shape[0], L, Kv * Ku)
        C[sl] = (Bd.transpose(0, 2, 1) @ kr).reshape(-1, Kd * Kv * Ku)
    return TensorDesign(C, [(dsu.subject_id, j) for j in dsu.js])


def lag_weight_kernels(S: int, basis_u: BSplineBasis, lag_stride: int = 1) -> np.ndarray:
    """(K_u, S, S) array ``W[c, a, b] = w * Bu_c(b - a)`` for included pairs ``a < b``."""
    first, second = pair_layout(S, lag_stride)
    lags = np.arange(1, S, dtype=np.float64)
    Bu = bspline_eval(basis_u, lags)
    W = np.zeros((basis_u.K, S, S))
    W[:, first, second] = Bu[second - first - 1].T / len(first)
    return W


def tensor_design_frames(V: np.ndarray, bases: TensorBases, lag_stride: int = 1,
                         chunk: int = 256) -> np.ndarray:
    """Same coefficients as :func:`tensor_design`, computed straight from frames.

    Uses the fact that the lag basis depends only on ``b - a``, so each frame
    needs ``S`` basis evaluations per margin instead of ``S(S-1)/2``.
    """
    V = np.asarray(V, dtype=np.float64)
    n, S = V.shape
    W = lag_weight_kernels(S, bases.u, lag_stride)
    Ku = bases.u.K
    Wflat = W.reshape(Ku * S, S)
    out = np.empty((n, bases.n_coef))
    for lo in range(0, n, chunk):
        sl = slice(lo, min(lo + chunk, n))
        Ed = bspline_eval(bases.d, V[sl])                     # (m, S, Kd)
        Ev = bspline_eval(bases.v, V[sl])                     # (m, S, Kv)
        M = (Wflat @ Ev).reshape(-1, Ku, S, bases.v.K)        # (m, Ku, S, Kv)
        out[sl] = np.einsum("msa,mcsb->mabc", Ed, M, optimize=True).reshape(Ed.shape[0], -1)
    return out


def design_from_series(series: Sequence[SubjectSeries], bases: TensorBases,
                       lag_stride: int = 1) -> TensorDesign:
    rows, index = [], []
    for s in series:
        if s.frames:
            rows.append(tensor_design_frames(s.matrix(), bases, lag_stride))
            index.extend((s.subject_id, f.j) for f in s.frames)
    C = np.vstack(rows) if rows else np.zeros((0, bases.n_coef))
    return TensorDesign(C, index)
