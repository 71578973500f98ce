"""Ridge-stabilised logistic regression by IRLS and one-vs-rest orchestration."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_is_fitted

from ._irls import penalized_irls
from ._parallel import Parallel, delayed, resolve_jobs
from ._validation import check_binary, check_design
from .exceptions import ConfigError, DataError, GaitprintError
from .identify import normalize_per_second
from .ingest import subject_sort_key

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitConfig:
    max_iter: int = 100
    tol: float = 1e-9
    ridge: float = 1e-6
    standardize: bool = True

    def __post_init__(self):
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.ridge < 0:
            raise ConfigError("ridge must be non-negative")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LogisticFit:
    """One fitted binary model, coefficients on the original column scale.

    ``beta[0]`` is the intercept. ``cov`` is the inverse of the penalized
    information at ``beta``; ``penalty_diag`` holds the diagonal ridge
    penalty expressed on the original scale so that
    ``cov == inv(X1' W X1 + 2 diag(penalty_diag))``.
    """

    target: str
    beta: np.ndarray
    cov: np.ndarray
    converged: bool
    n_iter: int
    deviance: float
    column_names: list[str]
    center: np.ndarray
    scale: np.ndarray
    penalty_diag: np.ndarray
    history: list[float] = field(default_factory=list)

    @property
    def intercept(self) -> float:
        return float(self.beta[0])

    @property
    def coef(self) -> np.ndarray:
        return self.beta[1:]


def fit_logistic_irls(X, y, cfg: FitConfig = FitConfig(), column_names: Sequence[str] | None = None,
                      target: str = "") -> LogisticFit:
    X = check_design(X, min_features=0)
    y = check_binary(y, X.shape[0])
    n, G = X.shape
    if cfg.standardize:
        center = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
    else:
        center, scale = np.zeros(G), np.ones(G)
    Xs = np.column_stack([np.ones(n), (X - center) / scale])
    P = np.diag(np.r_[0.0, np.full(G, cfg.ridge)])
    res = penalized_irls(Xs, y, P, max_iter=cfg.max_iter, tol=cfg.tol)

    # beta_orig = A @ beta_std
    A = np.zeros((G + 1, G + 1))
    A[0, 0] = 1.0
    A[0, 1:] = -center / scale
    A[np.arange(1, G + 1), np.arange(1, G + 1)] = 1.0 / scale
    cov_std = np.linalg.inv(res.information)
    cov = A @ cov_std @ A.T
    cov = 0.5 * (cov + cov.T)
    if not res.converged:
        logger.warning("logistic fit for %r did not converge in %d iterations", target, res.n_iter)
    return LogisticFit(
        target=target,
        beta=A @ res.beta,
        cov=cov,
        converged=res.converged,
        n_iter=res.n_iter,
        deviance=res.deviance,
        column_names=list(column_names) if column_names is not None else [f"x{g}" for g in range(G)],
        center=center,
        scale=scale,
        penalty_diag=np.r_[0.0, cfg.ridge * scale ** 2],
        history=res.history,
    )


def predict_prob(fit: LogisticFit, X_new, column_names: Sequence[str] | None = None) -> np.ndarray:
    if column_names is not None and list(column_names) != fit.column_names:
        raise DataError("design columns do not match the fitted model")
    X_new = check_design(X_new, len(fit.column_names))
    return expit(fit.beta[0] + X_new @ fit.beta[1:])


def _fit_one(X, subjects, target, cfg, names):
    y = (subjects == target).astype(np.float64)
    try:
        return target, fit_logistic_irls(X, y, cfg, names, target=target), None
    except GaitprintError as exc:
        return target, None, str(exc)


def one_vs_rest_fit(design, subjects: Sequence[str], cfg: FitConfig = FitConfig(),
                    column_names: Sequence[str] | None = None,
                    n_jobs: int | None = 1) -> tuple[dict[str, LogisticFit], dict[str, str]]:
    """Fit one model per subject (label 1 for that subject's seconds).

    Returns the fits keyed by subject in natural subject order, and a map of
    subject -> error message for fits that raised.
    """
    X = check_design(design)
    subjects = np.asarray([str(s) for s in subjects])
    targets = sorted(set(subjects.tolist()), key=subject_sort_key)
    if len(targets) < 2:
        raise DataError("one-vs-rest needs at least 2 subjects")
    results = Parallel(n_jobs=resolve_jobs(n_jobs), prefer="threads")(
        delayed(_fit_one)(X, subjects, t, cfg, column_names) for t in targets)
    fits = {t: f for t, f, _ in results if f is not None}
    failures = {t: e for t, _, e in results if e is not None}
    if failures:
        logger.warning("%d of %d one-vs-rest fits failed: %s", len(failures), len(targets),
                       "; ".join(f"{k}: {v}" for k, v in failures.items()))
    return fits, failures


# -- estimators ------------------------------------------------------------------

class IRLSLogisticRegression(ClassifierMixin, BaseEstimator):
    """Binary logistic regression fitted by penalized IRLS.

    Parameters
    ----------
    max_iter : int
        Newton iteration cap.
    tol : float
        Relative change in penalized deviance that counts as converged.
    ridge : float
        Penalty on non-intercept coefficients of the standardized design.
    standardize : bool
        Center and scale columns with training statistics before fitting.
    """

    def __init__(self, max_iter=100, tol=1e-9, ridge=1e-6, standardize=True):
        self.max_iter = max_iter
        self.tol = tol
        self.ridge = ridge
        self.standardize = standardize

    def fit(self, X, y, feature_names=None):
        X = check_design(X)
        self.classes_, yb = np.unique(np.asarray(y), return_inverse=True)
        if len(self.classes_) != 2:
            raise DataError(f"binary classifier needs 2 classes, got {len(self.classes_)}")
        cfg = FitConfig(self.max_iter, self.tol, self.ridge, self.standardize)
        self.fit_ = fit_logistic_irls(X, yb, cfg, feature_names)
        self.coef_ = self.fit_.coef[None, :]
        self.intercept_ = np.array([self.fit_.intercept])
        self.covariance_ = self.fit_.cov
        self.n_iter_ = self.fit_.n_iter
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "fit_")
        X = check_design(X, self.n_features_in_)
        return self.fit_.beta[0] + X @ self.fit_.beta[1:]

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]


class OneVsRestIdentifier(ClassifierMixin, BaseEstimator):
    """One binary model per identity, combined into per-second identity probabilities.

    Any binary classifier exposing ``predict_proba`` can be plugged in as
    ``estimator``; it is cloned once per identity.
    """

    def __init__(self, estimator=None, n_jobs=1):
        self.estimator = estimator
        self.n_jobs = n_jobs

    def _fit_target(self, X, y, target):
        est = clone(self.estimator if self.estimator is not None else IRLSLogisticRegression())
        return est.fit(X, (y == target).astype(int))

    def fit(self, X, y):
        X = check_design(X)
        y = np.asarray([str(v) for v in y])
        self.classes_ = np.asarray(sorted(set(y.tolist()), key=subject_sort_key), dtype=object)
        if len(self.classes_) < 2:
            raise DataError("one-vs-rest needs at least 2 identities")
        self.estimators_ = Parallel(n_jobs=resolve_jobs(self.n_jobs), prefer="threads")(
            delayed(self._fit_target)(X, y, t) for t in self.classes_)
        self.n_features_in_ = X.shape[1]
        return self

    def raw_scores(self, X):
        """(n, K) matrix of each identity model's positive-class probability."""
        check_is_fitted(self, "estimators_")
        X = check_design(X, self.n_features_in_)
        return np.column_stack([e.predict_proba(X)[:, 1] for e in self.estimators_])

    def predict_proba(self, X):
        return normalize_per_second(self.raw_scores(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
