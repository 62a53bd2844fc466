"""The embeddable forest handle.

A `Forest` owns a sampler state and an RNG stream and exposes the handful
of methods needed to compose the tree ensemble into larger Gibbs samplers:
running backfitting sweeps (optionally heteroskedastic), predicting at the
current state, and getting/setting the scalar parameters shared across
multiple forests.  The handle works on caller-scaled data: covariates in
[0, 1], outcome on whatever scale the surrounding model uses.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .priors import Hypers, SparsityState
from .sampler import ForestState, Opts, gibbs_sweep
from .trees import Node, SoftTree, forest_predict, serialize_forest
from .validation import check_positive_vector, check_unit_matrix, check_vector

__all__ = ["Forest", "make_forest"]


class Forest:
    """Mutable sampler handle; see `make_forest`."""

    def __init__(self, hypers: Hypers, opts: Opts, num_cols: int, seed):
        if num_cols < 1:
            raise ValueError("num_cols must be a positive integer")
        if hypers.sigma_hat is None:
            hypers = dataclasses.replace(hypers, sigma_hat=1.0)
        self.hypers = hypers
        self.opts = opts
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        trees = []
        for _ in range(hypers.num_tree):
            tau = float(self.rng.exponential(hypers.tau_scale)) if hypers.soft else 0.0
            trees.append(SoftTree(Node.leaf(0.0), tau))
        self.state = ForestState(
            trees=trees,
            sigma=hypers.sigma_hat,
            sigma_mu=hypers.sigma_mu_hat,
            sparsity=SparsityState.uniform(num_cols, alpha=1.0),
            hypers=hypers,
            opts=opts,
        )

    @property
    def num_cols(self) -> int:
        return self.state.num_cols

    # -- sweeps ---------------------------------------------------------

    def do_gibbs(self, X, Y, X_test, num_iter: int) -> np.ndarray:
        """Run ``num_iter`` backfitting sweeps; row r of the returned matrix
        holds the test-set predictions after sweep r.  Mutates the handle."""
        weights = np.ones(np.asarray(Y).shape[0])
        return self.do_gibbs_weighted(X, Y, weights, X_test, num_iter)

    def do_gibbs_weighted(self, X, Y, weights, X_test, num_iter: int) -> np.ndarray:
        """Heteroskedastic sweeps with per-observation variance sigma^2/w_i."""
        X = check_unit_matrix(X, self.num_cols, name="X")
        Y = check_vector(Y, X.shape[0], name="Y")
        weights = check_positive_vector(weights, X.shape[0])
        X_test = check_unit_matrix(X_test, self.num_cols, name="X_test")
        if num_iter < 0:
            raise ValueError("num_iter must be nonnegative")
        preds = np.empty((num_iter, X_test.shape[0]))
        for i in range(num_iter):
            gibbs_sweep(self.rng, self.state, X, Y, weights)
            preds[i] = forest_predict(self.state.trees, X_test)
        return preds

    def do_predict(self, X) -> np.ndarray:
        """Predictions at the current state; no mutation."""
        X = check_unit_matrix(X, self.num_cols, name="X")
        return forest_predict(self.state.trees, X)

    # -- shared-parameter accessors --------------------------------------

    def get_sigma(self) -> float:
        return self.state.sigma

    def set_sigma(self, sigma: float) -> None:
        if sigma <= 0.0:
            raise ValueError("sigma must be positive")
        self.state.sigma = float(sigma)

    def get_sigma_mu(self) -> float:
        return self.state.sigma_mu

    def set_sigma_mu(self, sigma_mu: float) -> None:
        if sigma_mu <= 0.0:
            raise ValueError("sigma_mu must be positive")
        self.state.sigma_mu = float(sigma_mu)

    def get_s(self) -> np.ndarray:
        return self.state.sparsity.s.copy()

    def set_s(self, s) -> None:
        self.state.sparsity = SparsityState(
            np.asarray(s, dtype=np.float64), self.state.sparsity.alpha
        )

    def get_alpha(self) -> float:
        return self.state.sparsity.alpha

    def set_alpha(self, alpha: float) -> None:
        self.state.sparsity = SparsityState(
            self.state.sparsity.s, float(alpha), log_s=self.state.sparsity.log_s
        )

    def get_counts(self) -> np.ndarray:
        """Per-column branch counts at the current state."""
        return self.state.counts.copy()

    def get_trees(self) -> list[dict]:
        """Compact serialized snapshot of the current ensemble."""
        return serialize_forest(self.state.trees)


def make_forest(hypers: Hypers, opts: Opts, num_cols: int, seed=0) -> Forest:
    """Build a forest of single-leaf trees (mu = 0) ready for sweeps.

    Initial state: sigma = sigma_hat (1.0 when unset), sigma_mu =
    sigma_mu_hat, uniform splitting proportions, alpha = 1, bandwidths
    drawn from their prior (zero in hard mode).  ``seed`` may be an int or
    a `numpy.random.Generator` to share a stream with a surrounding
    sampler.
    """
    return Forest(hypers, opts, num_cols, seed)
