"""From per-second model outputs to identity predictions and rank-k accuracy."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DataError

logger = logging.getLogger(__name__)

ALL = "all"
DEFAULT_WINDOWS = (1, 2, 5, 10, 25, 50, 100)


@dataclass
class ProbMatrix:
    """Row-normalised identity probabilities for test seconds.

    ``index[i]`` is the (true subject, j) of row ``i``; column ``k`` is the
    probability of identity ``candidates[k]``.
    """

    probs: np.ndarray
    candidates: list[str]
    index: list[tuple[str, int]]

    @property
    def truth(self) -> list[str]:
        return [s for s, _ in self.index]


def normalize_per_second(raw) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise DataError("expected a 2-D matrix of model outputs")
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise DataError("model outputs must be finite and non-negative")
    sums = raw.sum(axis=1, keepdims=True)
    zero = sums[:, 0] == 0
    out = np.empty_like(raw)
    out[~zero] = raw[~zero] / sums[~zero]
    if zero.any():
        logger.warning("%d all-zero rows replaced by uniform probabilities", int(zero.sum()))
        out[zero] = 1.0 / raw.shape[1]
    return out


def prob_matrix(raw, candidates: Sequence[str], index: Sequence[tuple[str, int]]) -> ProbMatrix:
    probs = normalize_per_second(raw)
    if probs.shape != (len(index), len(candidates)):
        raise DataError("probability matrix shape does not match index/candidates")
    return ProbMatrix(probs, [str(c) for c in candidates], [(str(s), int(j)) for s, j in index])


@dataclass
class Averaged:
    """One probability vector per block of test seconds."""

    subjects: list[str]
    probs: np.ndarray
    candidates: list[str]
    sizes: list[int]


def average_probs(pm: ProbMatrix, window: int | str = ALL) -> Averaged:
    """Average each subject's test-second probabilities.

    With ``window=ALL`` each subject yields one vector. With an integer window
    the subject's seconds (in ascending ``j``) are cut into consecutive
    non-overlapping blocks of that many seconds; a trailing shorter block is
    kept.
    """
    if window != ALL and int(window) < 1:
        raise DataError("window must be at least 1")
    by_subject: dict[str, list[tuple[int, int]]] = {}
    for row, (sid, j) in enumerate(pm.index):
        by_subject.setdefault(sid, []).append((j, row))
    subjects, vecs, sizes = [], [], []
    for sid, rows in by_subject.items():
        order = [r for _, r in sorted(rows)]
        w = len(order) if window == ALL else int(window)
        for start in range(0, len(order), w):
            block = order[start:start + w]
            subjects.append(sid)
            vecs.append(pm.probs[block].mean(axis=0))
            sizes.append(len(block))
    probs = np.vstack(vecs) if vecs else np.zeros((0, len(pm.candidates)))
    return Averaged(subjects, probs, list(pm.candidates), sizes)


def true_rank(vec: np.ndarray, truth_col: int) -> int:
    """1-based rank of ``truth_col`` under descending probability, ties to lower index."""
    p = vec[truth_col]
    return 1 + int(np.sum(vec > p)) + int(np.sum(vec[:truth_col] == p))


@dataclass
class RankReport:
    subjects: list[str]
    predicted: list[str]
    ranks: list[int]
    ks: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.ranks)

    def correct(self, k: int) -> int:
        return int(sum(r <= k for r in self.ranks))

    def accuracy(self, k: int) -> float:
        return self.correct(k) / self.n if self.n else float("nan")

    def summary(self) -> dict:
        return {"n": self.n,
                **{f"rank{k}_accuracy": self.accuracy(k) for k in self.ks},
                **{f"rank{k}_correct": self.correct(k) for k in self.ks}}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject", "predicted", "rank", *[f"rank{k}" for k in self.ks]])
            for s, p, r in zip(self.subjects, self.predicted, self.ranks):
                w.writerow([s, p, r, *[int(r <= k) for k in self.ks]])

    def write_json(self, path, extra: dict | None = None) -> None:
        with open(path, "w") as fh:
            json.dump({**(extra or {}), **self.summary()}, fh, indent=1, sort_keys=True)
            fh.write("\n")


def rank_k_accuracy(averaged: Averaged, truth: Sequence[str] | None = None,
                    ks: Sequence[int] = (1, 5)) -> RankReport:
    """Rank of the true identity for every averaged vector.

    ``truth`` defaults to the subject each vector was averaged over.
    """
    truth = list(averaged.subjects if truth is None else truth)
    col = {c: k for k, c in enumerate(averaged.candidates)}
    missing = sorted({t for t in truth if t not in col})
    if missing:
        raise DataError(f"true identities {missing} are not among the candidates")
    ranks = [true_rank(vec, col[t]) for vec, t in zip(averaged.probs, truth)]
    pred = [averaged.candidates[int(np.argmax(vec))] for vec in averaged.probs]
    return RankReport(truth, pred, ranks, tuple(ks))


def seconds_sensitivity(pm: ProbMatrix, windows: Sequence[int] = DEFAULT_WINDOWS,
                        ks: Sequence[int] = (1, 5)) -> list[dict]:
    """Rank-k accuracy pooled over all window blocks, for each window length."""
    if not windows:
        raise DataError("need at least one window")
    rows = []
    for w in windows:
        rep = rank_k_accuracy(average_probs(pm, w), ks=ks)
        for k in ks:
            rows.append({"window": int(w), "k": int(k), "accuracy": rep.accuracy(k), "blocks": rep.n})
    return rows


def write_sensitivity_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["window", "k", "accuracy", "blocks"])
        for r in rows:
            w.writerow([r["window"], r["k"], repr(float(r["accuracy"])), r["blocks"]])


def read_sensitivity_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
        return [{"window": int(r["window"]), "k": int(r["k"]), "accuracy": float(r["accuracy"]),
                 "blocks": int(r["blocks"])} for r in csv.DictReader(lines)]
