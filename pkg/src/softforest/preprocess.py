"""Covariate and outcome scaling.

Numeric covariates are passed through their training empirical CDF
(``F(x) = #{train <= x} / N``, ties sharing a value) so that every design
column lives in [0, 1]; categorical covariates with C levels expand to C
dummy columns.  Held-out numeric values interpolate linearly between the
training ECDF knots and clamp to [0, 1]; unseen factor levels are an error.

The outcome is either standardized (mean 0, variance 1) or mapped linearly
onto [-0.5, 0.5]; both are invertible affine maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

__all__ = [
    "QuantileTransform",
    "DummyTransform",
    "CovariateTransforms",
    "OutcomeScaler",
    "Dataset",
    "fit_transforms",
    "apply_transforms",
    "unscale_predictions",
    "coerce_table",
]


def coerce_table(X) -> pd.DataFrame:
    """Accept a DataFrame or 2-D array; arrays get columns x1..xP."""
    if isinstance(X, pd.DataFrame):
        return X
    arr = np.asarray(X)
    if arr.ndim != 2:
        raise ValueError("covariate input must be 2-dimensional")
    return pd.DataFrame(arr, columns=[f"x{j + 1}" for j in range(arr.shape[1])])


def _numeric_values(col: pd.Series, name: str) -> np.ndarray:
    try:
        values = col.astype(np.float64).to_numpy()
    except (TypeError, ValueError) as exc:
        raise ValueError(f"column '{name}' is not numeric") from exc
    if np.isnan(values).any():
        raise ValueError(f"column '{name}' contains missing values")
    return values


@dataclass
class QuantileTransform:
    """Empirical-CDF map for one numeric column."""

    name: str
    knots: np.ndarray
    cdf: np.ndarray

    @staticmethod
    def fit(name: str, col: pd.Series) -> "QuantileTransform":
        values = _numeric_values(col, name)
        knots = np.unique(values)
        counts = np.searchsorted(np.sort(values), knots, side="right")
        cdf = counts / values.size
        return QuantileTransform(name, knots, cdf)

    def transform(self, col: pd.Series) -> np.ndarray:
        values = _numeric_values(col, self.name)
        return np.interp(values, self.knots, self.cdf, left=0.0, right=1.0)

    @property
    def num_cols(self) -> int:
        return 1


@dataclass
class DummyTransform:
    """One dummy column per training level, in sorted level order."""

    name: str
    levels: list[str]
    _index: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        self._index = {lev: i for i, lev in enumerate(self.levels)}

    @staticmethod
    def fit(name: str, col: pd.Series) -> "DummyTransform":
        levels = sorted(str(v) for v in pd.unique(col.astype(str)))
        return DummyTransform(name, levels)

    def transform(self, col: pd.Series) -> np.ndarray:
        out = np.zeros((col.size, len(self.levels)))
        for i, value in enumerate(col.astype(str)):
            idx = self._index.get(value)
            if idx is None:
                raise ValueError(
                    f"unseen level '{value}' in column '{self.name}'"
                )
            out[i, idx] = 1.0
        return out

    @property
    def num_cols(self) -> int:
        return len(self.levels)


def _is_numeric(col: pd.Series) -> bool:
    return pd.api.types.is_numeric_dtype(col) and not pd.api.types.is_bool_dtype(col)


class CovariateTransforms:
    """Ordered per-column transforms; reusable on new tables."""

    def __init__(self, transforms: list):
        self.transforms = transforms

    @staticmethod
    def fit(table: pd.DataFrame, categorical: set[str] | None = None) -> "CovariateTransforms":
        if table.shape[1] == 0:
            raise ValueError("no covariate columns")
        categorical = categorical or set()
        transforms = []
        for name in table.columns:
            col = table[name]
            if name not in categorical and _is_numeric(col):
                transforms.append(QuantileTransform.fit(str(name), col))
            else:
                transforms.append(DummyTransform.fit(str(name), col))
        return CovariateTransforms(transforms)

    def apply(self, table: pd.DataFrame) -> np.ndarray:
        missing = [t.name for t in self.transforms if t.name not in table.columns]
        if missing:
            raise ValueError(f"schema mismatch: missing columns {missing}")
        blocks = [t.transform(table[t.name]) for t in self.transforms]
        blocks = [b if b.ndim == 2 else b[:, None] for b in blocks]
        return np.hstack(blocks) if blocks else np.empty((len(table), 0))

    @property
    def num_cols(self) -> int:
        return sum(t.num_cols for t in self.transforms)

    @property
    def variable_names(self) -> list[str]:
        return [t.name for t in self.transforms]

    @property
    def column_map(self) -> dict[str, list[int]]:
        """Original variable -> indices of its block in the design matrix."""
        out: dict[str, list[int]] = {}
        start = 0
        for t in self.transforms:
            out[t.name] = list(range(start, start + t.num_cols))
            start += t.num_cols
        return out

    @property
    def column_names(self) -> list[str]:
        """One name per design column (dummy columns carry their level)."""
        names = []
        for t in self.transforms:
            if isinstance(t, DummyTransform):
                names.extend(f"{t.name}={lev}" for lev in t.levels)
            else:
                names.append(t.name)
        return names


@dataclass
class OutcomeScaler:
    """Affine outcome map y -> (y - location) / scale and its inverse."""

    mode: str
    location: float
    scale: float

    @staticmethod
    def fit(y: np.ndarray, mode: str = "standardize") -> "OutcomeScaler":
        y = np.asarray(y, dtype=np.float64)
        if mode == "standardize":
            scale = float(np.std(y, ddof=1)) if y.size > 1 else 0.0
            if scale <= 0.0:
                raise ValueError("zero-variance outcome under standardize mode")
            return OutcomeScaler(mode, float(np.mean(y)), scale)
        if mode == "unit":
            lo, hi = float(np.min(y)), float(np.max(y))
            if hi - lo <= 0.0:
                raise ValueError("zero-range outcome")
            return OutcomeScaler(mode, (lo + hi) / 2.0, hi - lo)
        if mode == "none":
            return OutcomeScaler(mode, 0.0, 1.0)
        raise ValueError(f"unknown outcome scaling mode '{mode}'")

    def transform(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.location) / self.scale

    def inverse(self, v) -> np.ndarray:
        return np.asarray(v, dtype=np.float64) * self.scale + self.location


@dataclass
class Dataset:
    """Preprocessed design matrix in [0,1]^P' plus the scaled outcome."""

    X: np.ndarray
    y: np.ndarray
    column_map: dict[str, list[int]]
    scaler: OutcomeScaler


def fit_transforms(
    table: pd.DataFrame,
    outcome_column: str,
    mode: str = "standardize",
    categorical: set[str] | None = None,
) -> tuple[Dataset, CovariateTransforms]:
    """Fit covariate transforms and the outcome scaler on a training table."""
    if len(table) == 0:
        raise ValueError("empty table")
    if outcome_column not in table.columns:
        raise ValueError(f"unknown outcome column '{outcome_column}'")
    covariates = table.drop(columns=[outcome_column])
    transforms = CovariateTransforms.fit(covariates, categorical=categorical)
    y_raw = _numeric_values(table[outcome_column], outcome_column)
    scaler = OutcomeScaler.fit(y_raw, mode)
    dataset = Dataset(
        X=transforms.apply(covariates),
        y=scaler.transform(y_raw),
        column_map=transforms.column_map,
        scaler=scaler,
    )
    return dataset, transforms


def apply_transforms(transforms: CovariateTransforms, table: pd.DataFrame) -> np.ndarray:
    """Map a new table through the training transforms; values land in [0,1]."""
    return transforms.apply(table)


def unscale_predictions(scaler: OutcomeScaler, v) -> np.ndarray:
    """Exact inverse of the outcome transform."""
    return scaler.inverse(v)
