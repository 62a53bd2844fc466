"""Posterior summaries: variable selection, partial dependence, metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ContractError
from .preprocess import DummyTransform, coerce_table
from .trees import deserialize_forest, forest_predict

__all__ = [
    "VariableSelectionSummary",
    "posterior_probs",
    "partial_dependence",
    "rmse",
]


@dataclass
class VariableSelectionSummary:
    """Per-original-variable selection summaries.

    ``median_probability_model`` holds 1-based variable positions (the
    usual statistical reporting convention) of every variable whose
    posterior inclusion probability is at least 0.5.
    """

    variables: list[str]
    post_probs: np.ndarray
    varimp: np.ndarray
    median_probability_model: np.ndarray

    def as_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "variable": self.variables,
                "pip": self.post_probs,
                "varimp": self.varimp,
            }
        )


def posterior_probs(fit_or_counts, column_map: dict[str, list[int]] | None = None) -> VariableSelectionSummary:
    """Posterior inclusion probabilities and mean branch usage.

    Accepts either a fitted model (anything with ``counts_`` and
    ``column_map_``) or an iterations-by-columns count matrix plus the
    column map.  Dummy blocks are aggregated so each original variable
    gets one summary.
    """
    if column_map is None:
        counts = np.asarray(fit_or_counts.counts_)
        column_map = fit_or_counts.column_map_
    else:
        counts = np.asarray(fit_or_counts)
    if counts.ndim != 2:
        raise ValueError("counts must be an iterations-by-columns matrix")
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    variables = list(column_map.keys())
    pips = np.empty(len(variables))
    varimp = np.empty(len(variables))
    for i, var in enumerate(variables):
        block = counts[:, column_map[var]].sum(axis=1)
        pips[i] = np.mean(block >= 1)
        varimp[i] = np.mean(block)
    mpm = np.flatnonzero(pips >= 0.5) + 1
    return VariableSelectionSummary(variables, pips, varimp, mpm)


def _cached_iterations(fit):
    records = getattr(fit, "tree_records_", None)
    if not records:
        raise ContractError(
            "partial dependence requires a fit with cached trees "
            "(cache_trees=True)"
        )
    return records


def partial_dependence(fit, background, variable: str, grid) -> tuple[np.ndarray, pd.DataFrame]:
    """Per-draw partial dependence of the fitted function on one variable.

    For each grid value the variable's column in the background table is
    overwritten, the table is re-transformed, and predictions are averaged
    over rows; this is repeated for every saved posterior draw.  Returns
    the draws-by-grid matrix and a tidy (draw_index, grid_value, pd_value)
    frame.  Values are on the outcome scale of the fit (original units for
    regression, the latent scale for probit).
    """
    records = _cached_iterations(fit)
    table = coerce_table(background).copy()
    transforms = fit.transforms_
    names = transforms.variable_names
    if variable not in names:
        raise ValueError(f"unknown variable '{variable}'")
    tform = transforms.transforms[names.index(variable)]
    grid = list(grid)
    if isinstance(tform, DummyTransform):
        for level in grid:
            if str(level) not in tform.levels:
                raise ValueError(
                    f"unseen level '{level}' for variable '{variable}'"
                )
    # one stacked design with a block of rows per grid value
    blocks = []
    for value in grid:
        modified = table.copy()
        modified[variable] = value
        blocks.append(transforms.apply(modified))
    big = np.vstack(blocks)
    n = len(table)
    num_save = len(records)
    pd_matrix = np.empty((num_save, len(grid)))
    for it, rec in enumerate(records):
        trees = deserialize_forest(rec["trees"])
        preds = forest_predict(trees, big)
        pd_matrix[it] = preds.reshape(len(grid), n).mean(axis=1)
    pd_matrix = fit.scaler_.inverse(pd_matrix)
    tidy = pd.DataFrame(
        {
            "draw_index": np.repeat(np.arange(num_save), len(grid)),
            "grid_value": np.tile(np.asarray(grid, dtype=object), num_save),
            "pd_value": pd_matrix.ravel(),
        }
    )
    return pd_matrix, tidy


def rmse(x, y) -> float:
    """Root-mean-square difference between two equal-length vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("length mismatch")
    return float(np.sqrt(np.mean((x - y) ** 2)))
