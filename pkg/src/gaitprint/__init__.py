"""Identify people from wrist accelerometry recorded while walking."""
from .cma import CmaResult, cma_intervals, correlation_from_cov, equicoordinate_quantile, fingerprint_report
from .glm import FitConfig, IRLSLogisticRegression, LogisticFit, OneVsRestIdentifier, fit_logistic_irls, one_vs_rest_fit, predict_prob
from .gridcells import (CellIndex, GridCellFeaturizer, GridSpec, NearZeroVarianceScreen, PredictorRow, ScreenReport,
                        build_design, count_cells, count_frames, screen_predictors)
from .identify import (ProbMatrix, RankReport, average_probs, normalize_per_second, prob_matrix, rank_k_accuracy,
                       seconds_sensitivity)
from .ingest import (IU_SCHEMA, RawSample, RawStream, Schema, SecondFrame, SplitSpec, SubjectSeries,
                     load_accelerometry, load_series, load_zju, save_series, segment_seconds, stratified_split,
                     vector_magnitude)
from .lagmap import ALL, LagMap, LagTriple, build_lagmap, lag_slice

__version__ = "0.1.0"
