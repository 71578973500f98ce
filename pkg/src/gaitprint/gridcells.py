"""Grid-cell predictors from lag slices, plus near-zero-variance screening.

Each configured lag slice of the autocorrelation image is a cloud of
``(v(s-u), v(s))`` points. The square ``[lo, hi]^2`` is cut into cells of side
``h``; the point count in each cell is one predictor. Cells are half-open
``[a, a+h)`` except the last one per axis, which is closed at ``hi``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_design, check_frames, check_lags
from .exceptions import ConfigError, DataError
from .ingest import SubjectSeries, subject_sort_key
from .lagmap import LagMap, lag_pairs

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    range_lo: float = 0.0
    range_hi: float = 3.0
    cell_size: float = 0.25
    lags: tuple[int, ...] = (15, 30, 45)

    def __post_init__(self):
        object.__setattr__(self, "lags", tuple(int(u) for u in self.lags))
        if self.cell_size <= 0 or self.range_hi <= self.range_lo:
            raise ConfigError("grid needs cell_size > 0 and range_hi > range_lo")
        ratio = (self.range_hi - self.range_lo) / self.cell_size
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError(f"(range_hi - range_lo)/cell_size = {ratio} is not an integer")
        if not self.lags or min(self.lags) < 1:
            raise ConfigError("grid needs at least one positive lag")
        if len(set(self.lags)) != len(self.lags):
            raise ConfigError("duplicate lags in grid spec")

    @property
    def n_side(self) -> int:
        return int(round((self.range_hi - self.range_lo) / self.cell_size))

    @property
    def cells_per_lag(self) -> int:
        return self.n_side ** 2

    @property
    def G(self) -> int:
        return len(self.lags) * self.cells_per_lag

    def cells(self) -> list["CellIndex"]:
        """All cells in canonical column order: lag-major, then row-major."""
        n = self.n_side
        return [CellIndex(u, r, c) for u in self.lags for r in range(n) for c in range(n)]

    def column_names(self) -> list[str]:
        return [c.name for c in self.cells()]

    def cell_bounds(self, cell: "CellIndex") -> tuple[tuple[float, float], tuple[float, float]]:
        """((d_lo, d_hi), (v_lo, v_hi)) of a cell."""
        h, lo = self.cell_size, self.range_lo
        return (lo + cell.col * h, lo + (cell.col + 1) * h), (lo + cell.row * h, lo + (cell.row + 1) * h)

    def to_dict(self) -> dict:
        return {"range_lo": self.range_lo, "range_hi": self.range_hi,
                "cell_size": self.cell_size, "lags": list(self.lags)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(float(d["range_lo"]), float(d["range_hi"]), float(d["cell_size"]), tuple(d["lags"]))


@dataclass(frozen=True, order=True)
class CellIndex:
    """Cell at ``lag``; ``col`` indexes the lagged value d, ``row`` the value v."""

    lag: int
    row: int
    col: int

    @property
    def name(self) -> str:
        return f"u{self.lag}_r{self.row}_c{self.col}"

    @classmethod
    def parse(cls, name: str) -> "CellIndex":
        u, r, c = name.split("_")
        return cls(int(u[1:]), int(r[1:]), int(c[1:]))


@dataclass
class PredictorRow:
    subject_id: str
    j: int
    counts: np.ndarray
    discarded: int
    spec: GridSpec


def _cell_of(x: np.ndarray, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis cell index and in-range mask."""
    inside = (x >= spec.range_lo) & (x <= spec.range_hi)
    idx = np.floor((x - spec.range_lo) / spec.cell_size).astype(np.int64)
    idx = np.clip(idx, 0, spec.n_side - 1)
    return idx, inside


def count_cells(lagmap: LagMap, spec: GridSpec = GridSpec()) -> PredictorRow:
    check_lags(spec.lags, lagmap.S)
    n, per = spec.n_side, spec.cells_per_lag
    counts = np.zeros(spec.G, dtype=np.int64)
    discarded = 0
    for k, u in enumerate(spec.lags):
        mask = lagmap.u == u
        if not mask.any():
            raise DataError(f"lag map lacks lag {u}")
        col, ok_d = _cell_of(lagmap.d[mask], spec)
        row, ok_v = _cell_of(lagmap.v[mask], spec)
        ok = ok_d & ok_v
        discarded += int((~ok).sum())
        counts[k * per:(k + 1) * per] += np.bincount(row[ok] * n + col[ok], minlength=per)
    return PredictorRow(lagmap.subject_id, lagmap.j, counts, discarded, spec)


def count_frames(V: np.ndarray, spec: GridSpec = GridSpec()) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`count_cells` over a (n, S) frame matrix.

    Returns the (n, G) count matrix and the per-row number of discarded pairs.
    """
    V = np.asarray(V, dtype=np.float64)
    m, S = V.shape
    check_lags(spec.lags, S)
    n, per = spec.n_side, spec.cells_per_lag
    counts = np.zeros((m, spec.G), dtype=np.int64)
    discarded = np.zeros(m, dtype=np.int64)
    rows = np.arange(m)[:, None]
    for k, u in enumerate(spec.lags):
        d, v = lag_pairs(V.T, u)
        col, ok_d = _cell_of(d.T, spec)
        row, ok_v = _cell_of(v.T, spec)
        ok = ok_d & ok_v
        discarded += (~ok).sum(axis=1)
        flat = (rows * per + row * n + col)[ok]
        counts[:, k * per:(k + 1) * per] = np.bincount(flat, minlength=m * per).reshape(m, per)
    return counts, discarded


def rows_from_series(series: Sequence[SubjectSeries], spec: GridSpec = GridSpec()) -> list[PredictorRow]:
    out = []
    for s in series:
        if not s.frames:
            continue
        counts, disc = count_frames(s.matrix(), spec)
        out.extend(PredictorRow(s.subject_id, f.j, c, int(dc), spec)
                   for f, c, dc in zip(s.frames, counts, disc))
    return out


def build_design(rows: Sequence[PredictorRow], spec: GridSpec | None = None) -> tuple[np.ndarray, list[tuple[str, int]]]:
    """Stack predictor rows into an (n_seconds, G) matrix ordered by (subject, j)."""
    specs = {r.spec for r in rows}
    if len(specs) > 1:
        raise DataError("predictor rows were built with different grid specs")
    spec = specs.pop() if specs else (spec or GridSpec())
    if not rows:
        logger.warning("building an empty design matrix")
        return np.zeros((0, spec.G)), []
    ordered = sorted(rows, key=lambda r: (subject_sort_key(r.subject_id), r.j))
    X = np.vstack([r.counts for r in ordered]).astype(np.float64)
    return X, [(r.subject_id, r.j) for r in ordered]


# -- screening -------------------------------------------------------------------

@dataclass
class ScreenReport:
    kept: list[str]
    removed: dict[str, tuple[float, float]] = field(default_factory=dict)

    def to_json(self) -> str:
        removed = [{"cell": k, "unique_fraction": uf, "frequency_ratio": fr if math.isfinite(fr) else "inf"}
                   for k, (uf, fr) in self.removed.items()]
        return json.dumps({"kept": self.kept, "removed": removed}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ScreenReport":
        d = json.loads(text)
        removed = {r["cell"]: (r["unique_fraction"], float(r["frequency_ratio"])) for r in d["removed"]}
        return cls(d["kept"], removed)


def column_stats(x: np.ndarray) -> tuple[float, float]:
    """(fraction of unique values, most common count / second most common count)."""
    _, cnt = np.unique(x, return_counts=True)
    frac = len(cnt) / len(x)
    if len(cnt) == 1:
        return frac, math.inf
    top2 = np.sort(cnt)[-2:]
    return frac, top2[1] / top2[0]


def screen_predictors(design, columns: Sequence[str] | None = None,
                      unique_frac: float = 0.10, freq_ratio: float = 95 / 5) -> tuple[ScreenReport, np.ndarray]:
    """Drop near-zero-variance columns.

    A column is removed when it has a single value, or when both its unique
    fraction is below ``unique_frac`` and its top-two frequency ratio exceeds
    ``freq_ratio``.
    """
    X = check_design(design)
    columns = list(columns) if columns is not None else [f"x{g}" for g in range(X.shape[1])]
    kept, removed, keep_mask = [], {}, np.zeros(X.shape[1], dtype=bool)
    for g, name in enumerate(columns):
        frac, ratio = column_stats(X[:, g])
        if math.isinf(ratio) or (frac < unique_frac and ratio > freq_ratio):
            removed[name] = (frac, ratio)
        else:
            kept.append(name)
            keep_mask[g] = True
    if not kept:
        raise DataError("screening removed every predictor")
    return ScreenReport(kept, removed), X[:, keep_mask]


def export_design_csv(path, X: np.ndarray, index: Sequence[tuple[str, int]], columns: Sequence[str]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(["subject", "j", *columns]) + "\n")
        for (sid, j), row in zip(index, np.asarray(X)):
            fh.write(f"{sid},{j}," + ",".join(str(int(v)) if float(v).is_integer() else repr(float(v)) for v in row) + "\n")


# -- estimators ------------------------------------------------------------------

class GridCellFeaturizer(TransformerMixin, BaseEstimator):
    """Turn a (n_seconds, S) matrix of magnitude frames into grid-cell counts."""

    def __init__(self, range_lo=0.0, range_hi=3.0, cell_size=0.25, lags=(15, 30, 45)):
        self.range_lo = range_lo
        self.range_hi = range_hi
        self.cell_size = cell_size
        self.lags = lags

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.range_lo, self.range_hi, self.cell_size, tuple(self.lags))

    def fit(self, X, y=None):
        X = check_frames(X)
        spec = self.spec
        check_lags(spec.lags, X.shape[1])
        self.spec_ = spec
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = check_frames(X, self.n_features_in_)
        counts, self.discarded_ = count_frames(X, self.spec_)
        return counts.astype(np.float64)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "spec_")
        return np.asarray(self.spec_.column_names(), dtype=object)


class NearZeroVarianceScreen(TransformerMixin, BaseEstimator):
    """Keep-set learned on training rows, applied unchanged to any later rows."""

    def __init__(self, unique_frac=0.10, freq_ratio=95 / 5):
        self.unique_frac = unique_frac
        self.freq_ratio = freq_ratio

    def fit(self, X, y=None, feature_names=None):
        X = check_design(X)
        names = list(feature_names) if feature_names is not None else [f"x{g}" for g in range(X.shape[1])]
        self.report_, _ = screen_predictors(X, names, self.unique_frac, self.freq_ratio)
        kept = set(self.report_.kept)
        self.support_ = np.array([n in kept for n in names])
        self.feature_names_in_ = np.asarray(names, dtype=object)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "support_")
        X = check_design(X, self.n_features_in_)
        return X[:, self.support_]

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "support_")
        return self.feature_names_in_[self.support_]
