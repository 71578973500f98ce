"""Complete empirical autocorrelation distribution of a one-second frame.

For a frame ``v(1..S)`` and lag ``u`` the map holds the ``S - u`` triples
``(v(s-u), v(s), u)`` for ``s = u+1..S``. Triples are stored column-wise in
canonical order: lag ascending, then ``s`` ascending.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from ._validation import check_lags
from .exceptions import DataError
from .ingest import SecondFrame

ALL = "all"


@dataclass(frozen=True)
class LagTriple:
    d: float
    v: float
    u: int


@dataclass(frozen=True)
class LagMap:
    subject_id: str
    j: int
    S: int
    d: np.ndarray
    v: np.ndarray
    u: np.ndarray
    s: np.ndarray

    def __len__(self) -> int:
        return len(self.u)

    @property
    def lags(self) -> np.ndarray:
        return np.unique(self.u)

    @property
    def triples(self) -> Iterator[LagTriple]:
        for d, v, u in zip(self.d, self.v, self.u):
            yield LagTriple(float(d), float(v), int(u))


def lag_pairs(v: np.ndarray, u: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(v(s-u), v(s))`` for ``s = u+1..S`` as two aligned views."""
    return v[:-u], v[u:]


def build_lagmap(frame: SecondFrame, lags: Iterable[int] | str = ALL) -> LagMap:
    S = frame.S
    lags = tuple(range(1, S)) if lags == ALL else check_lags(sorted(lags), S)
    ds, vs, us, ss = [], [], [], []
    for u in lags:
        d, v = lag_pairs(frame.v, u)
        ds.append(d)
        vs.append(v)
        us.append(np.full(S - u, u, dtype=np.int64))
        ss.append(np.arange(u + 1, S + 1, dtype=np.int64))
    cat = (lambda parts, dt: np.concatenate(parts) if parts else np.empty(0, dt))
    return LagMap(frame.subject_id, frame.j, S, cat(ds, float), cat(vs, float),
                  cat(us, np.int64), cat(ss, np.int64))


def lag_slice(lagmap: LagMap, u: int) -> list[tuple[float, float]]:
    mask = lagmap.u == u
    if not mask.any():
        raise DataError(f"lag {u} not present in lag map for {lagmap.subject_id}/{lagmap.j}")
    return list(zip(lagmap.d[mask].tolist(), lagmap.v[mask].tolist()))


def iter_lagmaps(frames: Sequence[SecondFrame], lags=ALL) -> Iterator[LagMap]:
    """Lazily build lag maps, one frame at a time."""
    for f in frames:
        yield build_lagmap(f, lags)


def dump_lagmaps_csv(path, frames: Sequence[SecondFrame], lags=ALL) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject", "j", "u", "s", "d", "v"])
        for m in iter_lagmaps(frames, lags):
            for u, s, d, v in zip(m.u, m.s, m.d, m.v):
                w.writerow([m.subject_id, m.j, int(u), int(s), repr(float(d)), repr(float(v))])
