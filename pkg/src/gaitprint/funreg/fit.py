"""Penalized Bernoulli fitting of the trivariate functional model."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .._irls import penalized_irls
from .._parallel import Parallel, delayed, resolve_jobs
from .._validation import check_binary, check_design
from ..exceptions import ConfigError, DataError, GaitprintError
from ..glm import FitConfig
from ..ingest import subject_sort_key
from ..lagmap import ALL, build_lagmap
from ..ingest import SecondFrame
from .basis import bspline_eval, penalty_matrix
from .design import TensorBases

logger = logging.getLogger(__name__)

Lambda = tuple[float, float, float]


@dataclass
class PenaltyBlocks:
    P_d: np.ndarray
    P_v: np.ndarray
    P_u: np.ndarray

    @classmethod
    def from_bases(cls, bases: TensorBases) -> "PenaltyBlocks":
        return cls(penalty_matrix(bases.d), penalty_matrix(bases.v), penalty_matrix(bases.u))

    def margins(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """The three Kronecker-expanded marginal penalties, each (p, p)."""
        Id, Iv, Iu = (np.eye(P.shape[0]) for P in (self.P_d, self.P_v, self.P_u))
        return (np.kron(self.P_d, np.kron(Iv, Iu)),
                np.kron(Id, np.kron(self.P_v, Iu)),
                np.kron(np.kron(Id, Iv), self.P_u))

    def assemble(self, lam: Lambda) -> np.ndarray:
        if any(l < 0 for l in lam):
            raise ConfigError(f"smoothing parameters must be non-negative, got {lam}")
        return sum(l * M for l, M in zip(lam, self.margins()))


def full_penalty(penalty: PenaltyBlocks, lam: Lambda, ridge: float) -> np.ndarray:
    """Penalty over (intercept, spline coefficients); intercept unpenalized.

    The tensor basis sums to one, so the constant function duplicates the
    intercept; ``ridge`` on the spline coefficients pins that direction.
    """
    S = penalty.assemble(lam)
    p = S.shape[0]
    P = np.zeros((p + 1, p + 1))
    P[1:, 1:] = S + ridge * np.eye(p)
    return P


@dataclass
class FunFit:
    target: str
    intercept: float
    beta: np.ndarray
    lam: Lambda
    deviance: float
    converged: bool
    n_iter: int = 0
    history: list[float] = field(default_factory=list)

    def linear_predictor(self, C: np.ndarray) -> np.ndarray:
        return self.intercept + np.asarray(C) @ self.beta

    def predict_prob(self, C: np.ndarray) -> np.ndarray:
        return expit(self.linear_predictor(C))


def fit_penalized_irls(C, y, penalty: PenaltyBlocks, lam: Lambda, cfg: FitConfig = FitConfig(),
                       target: str = "", beta0: np.ndarray | None = None) -> FunFit:
    C = check_design(C)
    y = check_binary(y, C.shape[0])
    X = np.column_stack([np.ones(C.shape[0]), C])
    P = full_penalty(penalty, tuple(float(l) for l in lam), cfg.ridge)
    if P.shape[0] != X.shape[1]:
        raise DataError(f"penalty is {P.shape[0] - 1}-dimensional, design has {C.shape[1]} columns")
    res = penalized_irls(X, y, P, beta0=beta0, max_iter=cfg.max_iter, tol=cfg.tol)
    if not res.converged:
        logger.warning("functional fit for %r did not converge (lambda=%s)", target, lam)
    return FunFit(target, float(res.beta[0]), res.beta[1:], tuple(float(l) for l in lam),
                  res.deviance, res.converged, res.n_iter, res.history)


def bernoulli_deviance(y: np.ndarray, eta: np.ndarray) -> float:
    return float(-2.0 * np.sum(y * eta - np.logaddexp(0.0, eta)))


def stratified_folds(y: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Fold label per row, balancing each class across folds."""
    rng = np.random.default_rng(seed)
    out = np.empty(len(y), dtype=np.int64)
    for cls in (0.0, 1.0):
        idx = np.flatnonzero(y == cls)
        out[rng.permutation(idx)] = np.arange(len(idx)) % folds
    return out


def cv_deviance(C, y, penalty, grid: Sequence[Lambda], folds: int = 5, seed: int = 0,
                cfg: FitConfig = FitConfig()) -> np.ndarray:
    """Mean held-out deviance per observation for every grid point."""
    C = check_design(C)
    y = check_binary(y, C.shape[0])
    if folds < 2:
        raise ConfigError("need at least 2 folds")
    fold = stratified_folds(y, folds, seed)
    scores = np.zeros(len(grid))
    used = 0
    for k in range(folds):
        tr, te = fold != k, fold == k
        if len(np.unique(y[tr])) < 2 or len(np.unique(y[te])) < 2:
            logger.warning("fold %d has a single class; skipped", k)
            continue
        used += 1
        beta0 = None
        for g, lam in enumerate(grid):
            fit = fit_penalized_irls(C[tr], y[tr], penalty, lam, cfg, beta0=beta0)
            beta0 = np.r_[fit.intercept, fit.beta]
            scores[g] += bernoulli_deviance(y[te], fit.linear_predictor(C[te])) / te.sum()
    if used == 0:
        raise DataError("every cross-validation fold had a single class")
    return scores / used


def pick_lambda(grid: Sequence[Lambda], scores: Sequence[float], rtol: float = 1e-12) -> Lambda:
    """Lowest score; ties go to the larger penalty, exact duplicates to the first."""
    best = 0
    for g in range(1, len(grid)):
        if scores[g] < scores[best] - rtol * abs(scores[best]):
            best = g
        elif abs(scores[g] - scores[best]) <= rtol * abs(scores[best]):
            if sum(map(math.log1p, grid[g])) > sum(map(math.log1p, grid[best])):
                best = g
    return tuple(grid[best])


def select_lambda(C, y, penalty: PenaltyBlocks, grid: Sequence[Lambda], folds: int = 5, seed: int = 0,
                  cfg: FitConfig = FitConfig()) -> Lambda:
    grid = [tuple(float(l) for l in lam) for lam in grid]
    if not grid:
        raise ConfigError("empty smoothing-parameter grid")
    if len(grid) == 1:
        return grid[0]
    return pick_lambda(grid, cv_deviance(C, y, penalty, grid, folds, seed, cfg))


def lambda_scales(C: np.ndarray, penalty: PenaltyBlocks) -> np.ndarray:
    """Per-margin scale that puts lambda = 1 on a par with the data information."""
    info = 0.25 * float(np.einsum("ij,ij->", C, C))
    return np.array([info / max(np.trace(M), 1e-300) for M in penalty.margins()])


def default_lambda_grid(C, penalty: PenaltyBlocks, relative: Sequence[float] = (1e-4, 1e-3, 1e-2, 1e-1, 1.0),
                        isotropic: bool = True) -> list[Lambda]:
    """Log-spaced grid in units of :func:`lambda_scales`.

    ``isotropic`` keeps the three relative values equal; otherwise the full
    Cartesian product is returned.
    """
    s = lambda_scales(np.asarray(C), penalty)
    if isotropic:
        return [tuple(float(r * x) for x in s) for r in relative]
    return [(float(a * s[0]), float(b * s[1]), float(c * s[2]))
            for a in relative for b in relative for c in relative]


def _selection_targets(targets: list[str], n_select: int | None) -> list[str]:
    if n_select is None or n_select >= len(targets):
        return targets
    picks = np.linspace(0, len(targets) - 1, n_select).round().astype(int)
    return [targets[i] for i in sorted(set(picks.tolist()))]


def funreg_one_vs_rest(C, subjects: Sequence[str], penalty: PenaltyBlocks, grid: Sequence[Lambda],
                       cfg: FitConfig = FitConfig(), folds: int = 5, seed: int = 0,
                       selection: str = "shared", n_select: int | None = 5,
                       n_jobs: int | None = 1) -> tuple[dict[str, FunFit], dict[str, str]]:
    """One penalized fit per subject on a shared design.

    ``selection="shared"`` picks a single smoothing triple by summing the
    cross-validated deviance of ``n_select`` evenly spread subjects;
    ``"per-subject"`` runs the selection separately for every fit.
    """
    C = check_design(C)
    subjects = np.asarray([str(s) for s in subjects])
    targets = sorted(set(subjects.tolist()), key=subject_sort_key)
    if len(targets) < 2:
        raise DataError("one-vs-rest needs at least 2 subjects")
    if selection not in ("shared", "per-subject"):
        raise ConfigError(f"unknown lambda selection mode {selection!r}")
    grid = [tuple(float(l) for l in lam) for lam in grid]
    if not grid:
        raise ConfigError("empty smoothing-parameter grid")
    jobs = resolve_jobs(n_jobs)

    shared = None
    if selection == "shared":
        if len(grid) == 1:
            shared = grid[0]
        else:
            chosen = _selection_targets(targets, n_select)
            per = Parallel(n_jobs=jobs, prefer="threads")(
                delayed(cv_deviance)(C, (subjects == t).astype(float), penalty, grid, folds, seed, cfg)
                for t in chosen)
            shared = pick_lambda(grid, np.sum(per, axis=0))
        logger.info("shared smoothing parameters %s", shared)

    def one(t):
        y = (subjects == t).astype(float)
        try:
            lam = shared if shared is not None else select_lambda(C, y, penalty, grid, folds, seed, cfg)
            return t, fit_penalized_irls(C, y, penalty, lam, cfg, target=t), None
        except GaitprintError as exc:
            return t, None, str(exc)

    results = Parallel(n_jobs=jobs, prefer="threads")(delayed(one)(t) for t in targets)
    fits = {t: f for t, f, _ in results if f is not None}
    failures = {t: e for t, _, e in results if e is not None}
    if failures:
        logger.warning("%d functional fits failed", len(failures))
    return fits, failures


def coefficient_tensor(fit: FunFit, bases: TensorBases) -> np.ndarray:
    return fit.beta.reshape(bases.d.K, bases.v.K, bases.u.K)


def evaluate_surface(fit: FunFit, bases: TensorBases, d, v, u) -> np.ndarray:
    """F(d, v, u) at matching points (broadcast 1-D arrays)."""
    Bd, Bv, Bu = bspline_eval(bases.d, d), bspline_eval(bases.v, v), bspline_eval(bases.u, u)
    return np.einsum("la,lb,lc,abc->l", Bd, Bv, Bu, coefficient_tensor(fit, bases), optimize=True)


def linear_predictor_raw(fit: FunFit, bases: TensorBases, frame: SecondFrame, lag_stride: int = 1) -> float:
    """Linear predictor from the raw frame: intercept + weighted sum of F over all lag pairs.

    Independent of the cached design: walks the lag map directly.
    """
    lags = ALL if lag_stride == 1 else list(range(1, frame.S, lag_stride))
    m = build_lagmap(frame, lags)
    F = evaluate_surface(fit, bases, m.d, m.v, m.u.astype(float))
    return fit.intercept + float(F.sum()) / len(m)


def write_surface_csv(path, fit: FunFit, bases: TensorBases, n_grid: int = 13, lags: Sequence[int] | None = None) -> None:
    d = np.linspace(bases.d.lo, bases.d.hi, n_grid)
    v = np.linspace(bases.v.lo, bases.v.hi, n_grid)
    u = np.asarray(lags if lags is not None else np.linspace(bases.u.lo, bases.u.hi, n_grid).round())
    dd, vv, uu = (a.ravel() for a in np.meshgrid(d, v, u, indexing="ij"))
    F = evaluate_surface(fit, bases, dd, vv, uu)
    with open(path, "w") as fh:
        fh.write("d,v,u,F\n")
        for row in zip(dd, vv, uu, F):
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
