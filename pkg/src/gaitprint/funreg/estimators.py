"""scikit-learn style wrappers around the functional regression pipeline."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import check_design, check_frames
from ..exceptions import DataError
from ..glm import FitConfig
from ..identify import normalize_per_second
from ..ingest import subject_sort_key
from .design import TensorBases, tensor_design_frames
from .fit import PenaltyBlocks, default_lambda_grid, funreg_one_vs_rest


class TensorSplineFeaturizer(TransformerMixin, BaseEstimator):
    """Frames (n_seconds, S) -> collapsed tensor-spline coefficients (n_seconds, K^3)."""

    def __init__(self, n_basis=8, degree=3, value_range=(0.0, 3.0), lag_stride=1):
        self.n_basis = n_basis
        self.degree = degree
        self.value_range = value_range
        self.lag_stride = lag_stride

    def fit(self, X, y=None):
        X = check_frames(X)
        self.bases_ = TensorBases.default(X.shape[1], self.n_basis, self.degree, tuple(self.value_range))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "bases_")
        X = check_frames(X, self.n_features_in_)
        return tensor_design_frames(X, self.bases_, self.lag_stride)


class FunctionalRegressionIdentifier(ClassifierMixin, BaseEstimator):
    """One-vs-rest trivariate functional regression on raw magnitude frames.

    ``relative_lambdas`` are multiples of the per-margin penalty scale; the
    candidate triples are isotropic in those units unless ``isotropic=False``.
    """

    def __init__(self, n_basis=8, degree=3, value_range=(0.0, 3.0), lag_stride=1,
                 relative_lambdas=(1e-4, 1e-3, 1e-2, 1e-1, 1.0), isotropic=True, folds=5,
                 selection="shared", n_select=5, ridge=1e-6, max_iter=100, tol=1e-9,
                 random_state=0, n_jobs=1):
        self.n_basis = n_basis
        self.degree = degree
        self.value_range = value_range
        self.lag_stride = lag_stride
        self.relative_lambdas = relative_lambdas
        self.isotropic = isotropic
        self.folds = folds
        self.selection = selection
        self.n_select = n_select
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y):
        self.featurizer_ = TensorSplineFeaturizer(self.n_basis, self.degree, self.value_range,
                                                  self.lag_stride).fit(X)
        C = self.featurizer_.transform(X)
        return self.fit_design(C, y, self.featurizer_.bases_, n_frames_cols=self.featurizer_.n_features_in_)

    def fit_design(self, C, y, bases: TensorBases, n_frames_cols=None):
        """Fit on a precomputed tensor design (shared across callers)."""
        C = check_design(C)
        y = np.asarray([str(v) for v in y])
        self.bases_ = bases
        self.penalty_ = PenaltyBlocks.from_bases(bases)
        self.lambda_grid_ = default_lambda_grid(C, self.penalty_, self.relative_lambdas, self.isotropic)
        cfg = FitConfig(self.max_iter, self.tol, self.ridge, standardize=False)
        fits, failures = funreg_one_vs_rest(C, y, self.penalty_, self.lambda_grid_, cfg, self.folds,
                                            self.random_state, self.selection, self.n_select, self.n_jobs)
        if failures:
            raise DataError(f"functional fits failed: {failures}")
        self.classes_ = np.asarray(sorted(fits, key=subject_sort_key), dtype=object)
        self.fits_ = [fits[c] for c in self.classes_]
        self.n_features_in_ = n_frames_cols if n_frames_cols is not None else C.shape[1]
        return self

    def raw_scores_design(self, C):
        check_is_fitted(self, "fits_")
        C = check_design(C, self.bases_.n_coef)
        return np.column_stack([f.predict_prob(C) for f in self.fits_])

    def raw_scores(self, X):
        check_is_fitted(self, "featurizer_")
        return self.raw_scores_design(self.featurizer_.transform(X))

    def predict_proba(self, X):
        return normalize_per_second(self.raw_scores(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
