"""Input validation helpers shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ConfigError, DataError


def check_frames(X, S: int | None = None) -> np.ndarray:
    """Validate a matrix of second-frames (one row per second, S magnitudes)."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if S is not None and X.shape[1] != S:
        raise DataError(f"frames have {X.shape[1]} samples, expected S={S}")
    if X.shape[1] < 2:
        raise ConfigError("frames need at least 2 samples per second")
    if np.any(X < 0):
        raise DataError("vector magnitudes must be non-negative")
    return X


def check_design(X, n_features: int | None = None, min_features: int = 1) -> np.ndarray:
    try:
        X = check_array(X, dtype=np.float64, ensure_all_finite=True, ensure_min_samples=1,
                        ensure_min_features=min_features)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if n_features is not None and X.shape[1] != n_features:
        raise DataError(f"design has {X.shape[1]} columns, model expects {n_features}")
    return X


def check_binary(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != n:
        raise DataError(f"got {y.shape[0]} labels for {n} rows")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be 0/1")
    if y.min() == y.max():
        raise DataError("labels contain a single class")
    return y


def check_lags(lags, S: int) -> tuple[int, ...]:
    lags = tuple(int(u) for u in lags)
    bad = [u for u in lags if not 1 <= u <= S - 1]
    if bad:
        raise ConfigError(f"lags {bad} outside 1..{S - 1}")
    if len(set(lags)) != len(lags):
        raise ConfigError("duplicate lags")
    return lags
