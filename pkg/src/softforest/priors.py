"""Prior configuration, densities, and prior samplers for the tree ensemble.

Covers the depth-indexed branching process over tree shapes, the
splitting-rule prior (categorical over columns, uniform cutpoint over the
hard-narrowed interval), the exponential bandwidth prior, half-Cauchy scale
hyperpriors, and the Dirichlet splitting-proportion state used for variable
selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trees import Node, SoftTree

__all__ = [
    "Hypers",
    "SparsityState",
    "branch_prob",
    "sample_tree_from_prior",
    "log_tree_prior",
    "log_shape_prior",
    "theta_B",
    "sample_sigma_mu_prior",
    "estimate_sigma_hat",
]

# Prior tree draws are forced to terminate here; with any reasonable depth
# penalty the probability of reaching it is negligible.
_MAX_PRIOR_DEPTH = 64


@dataclass(frozen=True)
class Hypers:
    """Immutable prior configuration.

    ``sigma_mu_hat`` defaults to ``0.5 / (k * sqrt(num_tree))`` when not set
    explicitly.  ``sigma_hat`` anchors the noise-scale prior; model drivers
    estimate it from data, and it defaults to 1.0 for caller-scaled
    workflows.  ``soft=False`` selects hard indicator trees (bandwidth
    pinned at zero).
    """

    num_tree: int = 20
    gamma: float = 0.95
    beta: float = 2.0
    k: float = 2.0
    sigma_mu_hat: float | None = None
    sigma_hat: float | None = None
    tau_scale: float = 0.1
    alpha_shape_a: float = 0.5
    alpha_shape_b: float = 1.0
    soft: bool = True

    def __post_init__(self):
        if self.num_tree < 1:
            raise ValueError("num_tree must be a positive integer")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")
        for name in ("k", "tau_scale", "alpha_shape_a", "alpha_shape_b"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.sigma_mu_hat is None:
            object.__setattr__(
                self, "sigma_mu_hat", 0.5 / (self.k * math.sqrt(self.num_tree))
            )
        if self.sigma_mu_hat <= 0.0:
            raise ValueError("sigma_mu_hat must be positive")
        if self.sigma_hat is not None and self.sigma_hat <= 0.0:
            raise ValueError("sigma_hat must be positive")


class SparsityState:
    """Splitting proportions ``s`` (a simplex over columns) plus ``alpha``.

    ``log_s`` is carried alongside ``s`` so that log-densities stay finite
    even when individual simplex entries underflow to zero, which happens
    routinely under Dirichlet(alpha/P, ...) draws with many columns.
    """

    __slots__ = ("s", "log_s", "alpha")

    def __init__(self, s: np.ndarray, alpha: float = 1.0, log_s: np.ndarray | None = None):
        s = np.asarray(s, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("s must be a nonempty vector")
        if np.any(s < 0.0) or abs(s.sum() - 1.0) > 1e-12:
            raise ValueError("s must be a probability simplex")
        if alpha <= 0.0:
            raise ValueError("alpha must be positive")
        self.s = s
        if log_s is None:
            with np.errstate(divide="ignore"):  # -inf marks excluded columns
                log_s = np.log(s)
        self.log_s = np.asarray(log_s, dtype=np.float64)
        self.alpha = float(alpha)

    @staticmethod
    def uniform(num_cols: int, alpha: float = 1.0) -> "SparsityState":
        s = np.full(num_cols, 1.0 / num_cols)
        return SparsityState(s, alpha, log_s=np.full(num_cols, -math.log(num_cols)))

    @property
    def num_cols(self) -> int:
        return self.s.size


def branch_prob(depth: int, gamma: float, beta: float) -> float:
    """Probability that a node at ``depth`` becomes a branch: gamma/(1+d)^beta."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    return gamma / (1.0 + depth) ** beta


def _draw_var(rng: np.random.Generator, sparsity: SparsityState) -> int:
    return int(rng.choice(sparsity.num_cols, p=sparsity.s))


def sample_tree_from_prior(
    rng: np.random.Generator,
    hypers: Hypers,
    sparsity: SparsityState,
    sigma_mu: float | None = None,
) -> SoftTree:
    """Draw a full tree (shape, splits, bandwidth, leaves) from the prior.

    Leaf values are Normal(0, sigma_mu^2); ``sigma_mu`` defaults to the
    prior center ``hypers.sigma_mu_hat``.
    """
    if sigma_mu is None:
        sigma_mu = hypers.sigma_mu_hat
    tau = float(rng.exponential(hypers.tau_scale)) if hypers.soft else 0.0
    lo = np.zeros(sparsity.num_cols)
    hi = np.ones(sparsity.num_cols)

    def grow(depth: int) -> Node:
        p = branch_prob(depth, hypers.gamma, hypers.beta)
        if depth < _MAX_PRIOR_DEPTH and rng.uniform() < p:
            var = _draw_var(rng, sparsity)
            cut = float(rng.uniform(lo[var], hi[var]))
            old_hi = hi[var]
            hi[var] = cut
            left = grow(depth + 1)
            hi[var] = old_hi
            old_lo = lo[var]
            lo[var] = cut
            right = grow(depth + 1)
            lo[var] = old_lo
            return Node.branch(var, cut, left, right)
        return Node.leaf(float(rng.normal(0.0, sigma_mu)))

    return SoftTree(grow(0), tau)


def log_shape_prior(tree: SoftTree, hypers: Hypers) -> float:
    """Log-probability of the branch/leaf shape under the branching process."""
    logp = 0.0
    for _, node, depth in tree.nodes():
        p = branch_prob(depth, hypers.gamma, hypers.beta)
        if node.is_leaf:
            logp += math.log1p(-p)
        else:
            logp += math.log(p)
    return logp


def log_tree_prior(tree: SoftTree, hypers: Hypers, sparsity: SparsityState) -> float:
    """Full log prior: shape, splitting rules, and (soft mode) bandwidth.

    The measure matches ``sample_tree_from_prior``: categorical column
    choice, uniform cutpoint density over the hard-narrowed ancestor
    interval, and an Exponential(mean ``tau_scale``) bandwidth when the
    tree is soft.
    """
    logp = log_shape_prior(tree, hypers)
    lo = np.zeros(sparsity.num_cols)
    hi = np.ones(sparsity.num_cols)

    def visit(node: Node) -> None:
        nonlocal logp
        if node.is_leaf:
            return
        var, cut = node.var, node.cut
        logp += float(sparsity.log_s[var]) - math.log(hi[var] - lo[var])
        old_hi = hi[var]
        hi[var] = cut
        visit(node.left)
        hi[var] = old_hi
        old_lo = lo[var]
        lo[var] = cut
        visit(node.right)
        lo[var] = old_lo

    visit(tree.root)
    if tree.tau > 0.0:
        logp += -math.log(hypers.tau_scale) - tree.tau / hypers.tau_scale
    return logp


def theta_B(alpha: float, num_branches: int) -> float:
    """alpha * sum_{i=0}^{B-1} 1/(alpha+i): approximate Poisson mean of
    (number of predictors used - 1) under the sparsity prior."""
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    if num_branches < 1:
        raise ValueError("num_branches must be >= 1")
    i = np.arange(num_branches, dtype=np.float64)
    return float(alpha * np.sum(1.0 / (alpha + i)))


def sample_sigma_mu_prior(rng: np.random.Generator, hypers: Hypers, size=None):
    """Half-Cauchy draw(s) with scale ``sigma_mu_hat``."""
    return hypers.sigma_mu_hat * np.abs(rng.standard_cauchy(size))


def estimate_sigma_hat(X: np.ndarray, y: np.ndarray) -> float:
    """Noise-scale anchor from the data.

    Residual standard deviation of an OLS fit (with intercept) of y on X
    when there are enough rows (N > P + 2); otherwise the sample standard
    deviation of y.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    fallback = float(np.std(y, ddof=1)) if n > 1 else 1.0
    if n > p + 2:
        design = np.column_stack([np.ones(n), X])
        coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        df = n - rank
        if df >= 1:
            est = math.sqrt(float(resid @ resid) / df)
            if est > 1e-12:
                return est
    return max(fallback, 1e-12)
