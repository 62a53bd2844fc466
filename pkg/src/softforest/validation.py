"""Input-validation helpers for array-facing entry points."""

from __future__ import annotations

import numpy as np

__all__ = ["check_unit_matrix", "check_vector", "check_positive_vector"]


def check_unit_matrix(X, num_cols: int | None = None, name: str = "X") -> np.ndarray:
    """Validate a 2-D finite design matrix with entries in [0, 1]."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional")
    if num_cols is not None and X.shape[1] != num_cols:
        raise ValueError(f"{name} must have {num_cols} columns, got {X.shape[1]}")
    if X.size and not np.isfinite(X).all():
        raise ValueError(f"{name} contains non-finite values")
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    return X


def check_vector(v, length: int | None = None, name: str = "y") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional")
    if length is not None and v.size != length:
        raise ValueError(f"{name} must have length {length}, got {v.size}")
    if v.size and not np.isfinite(v).all():
        raise ValueError(f"{name} contains non-finite values")
    return v


def check_positive_vector(v, length: int | None = None, name: str = "weights") -> np.ndarray:
    v = check_vector(v, length, name)
    if v.size and v.min() <= 0.0:
        raise ValueError(f"{name} must be strictly positive")
    return v
