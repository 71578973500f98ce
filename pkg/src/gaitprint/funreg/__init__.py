"""Trivariate functional regression on the lag-pair image."""
from .basis import BSplineBasis, bspline_eval, penalty_matrix
from .design import (DSUMatrices, TensorBases, TensorDesign, build_dsu_matrices, design_from_series,
                     pair_layout, tensor_design, tensor_design_frames)
from .estimators import FunctionalRegressionIdentifier, TensorSplineFeaturizer
from .fit import (FunFit, PenaltyBlocks, cv_deviance, default_lambda_grid, evaluate_surface,
                  fit_penalized_irls, full_penalty, funreg_one_vs_rest, linear_predictor_raw,
                  select_lambda, write_surface_csv)

__all__ = [
    "BSplineBasis", "bspline_eval", "penalty_matrix",
    "DSUMatrices", "TensorBases", "TensorDesign", "build_dsu_matrices", "design_from_series",
    "pair_layout", "tensor_design", "tensor_design_frames",
    "FunctionalRegressionIdentifier", "TensorSplineFeaturizer",
    "FunFit", "PenaltyBlocks", "cv_deviance", "default_lambda_grid", "evaluate_surface",
    "fit_penalized_irls", "full_penalty", "funreg_one_vs_rest", "linear_predictor_raw",
    "select_lambda", "write_surface_csv",
]
