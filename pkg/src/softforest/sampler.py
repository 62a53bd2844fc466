"""Bayesian backfitting MCMC kernel for the soft-tree ensemble.

One sweep updates each tree in index order (structure move against the
marginalized-leaf likelihood, bandwidth move, leaf draw), then the noise
scale, the leaf scale, the splitting proportions, and their concentration.
The weighted and unweighted variants share a single implementation: the
unweighted path runs with unit weights, so the two are bit-identical under
a shared seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, logsumexp

from .priors import Hypers, SparsityState, log_tree_prior
from .trees import LEAF, Node, SoftTree, cut_interval, leaf_weight_matrix

__all__ = [
    "Opts",
    "ForestState",
    "log_marginal",
    "draw_leaves",
    "propose_tree",
    "structure_accept_log_prob",
    "mh_tree_update",
    "update_tau",
    "update_sigma",
    "update_sigma_mu",
    "update_s",
    "update_alpha",
    "gibbs_sweep",
    "slice_sample",
]

# Random-walk step on log(tau); plain MH, no adaptation.
TAU_STEP_SD = 0.3

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_HALF = math.log(0.5)


@dataclass
class Opts:
    """Chain-control configuration."""

    num_burn: int = 2500
    num_save: int = 2500
    num_thin: int = 1
    update_s: bool = True
    update_sigma: bool = True
    update_sigma_mu: bool = True
    update_tau: bool = True
    cache_trees: bool = True

    def __post_init__(self):
        if self.num_burn < 0 or self.num_save < 0 or self.num_thin < 1:
            raise ValueError("invalid chain lengths")


class ForestState:
    """Ensemble state plus per-tree caches bound to a design matrix.

    Caches (leaf-weight matrices and per-tree fitted values on the bound
    rows) are refreshed whenever a different design matrix is bound.
    ``counts`` tracks how many branches split on each column.
    """

    def __init__(
        self,
        trees: list[SoftTree],
        sigma: float,
        sigma_mu: float,
        sparsity: SparsityState,
        hypers: Hypers,
        opts: Opts,
    ):
        self.trees = trees
        self.sigma = float(sigma)
        self.sigma_mu = float(sigma_mu)
        self.sparsity = sparsity
        self.hypers = hypers
        self.opts = opts
        self.counts = np.zeros(sparsity.num_cols, dtype=np.int64)
        for tree in trees:
            self.counts += tree.var_counts(sparsity.num_cols)
        self._x_source = None
        self.X: np.ndarray | None = None
        self.phis: list[np.ndarray] | None = None
        self.fits: np.ndarray | None = None
        self.total_fit: np.ndarray | None = None

    @property
    def num_tree(self) -> int:
        return len(self.trees)

    @property
    def num_cols(self) -> int:
        return self.sparsity.num_cols

    def bind(self, X: np.ndarray) -> None:
        """Attach a design matrix and refresh the per-tree caches."""
        if X is self._x_source:
            return
        X_arr = np.asfortranarray(X, dtype=np.float64)
        if X_arr.ndim != 2 or X_arr.shape[1] != self.num_cols:
            raise ValueError(
                f"design matrix must have {self.num_cols} columns"
            )
        self._x_source = X
        self.X = X_arr
        self.phis = [leaf_weight_matrix(t, X_arr) for t in self.trees]
        self.fits = np.vstack(
            [phi @ t.leaf_values() for phi, t in zip(self.phis, self.trees)]
        )
        self.total_fit = self.fits.sum(axis=0)

    def refresh_tree_cache(self, t: int) -> None:
        self.phis[t] = leaf_weight_matrix(self.trees[t], self.X)

    def scan_counts(self) -> np.ndarray:
        """Recount splits from scratch (the cached version must match)."""
        counts = np.zeros(self.num_cols, dtype=np.int64)
        for tree in self.trees:
            counts += tree.var_counts(self.num_cols)
        return counts


# -- marginal likelihood and leaf draws ----------------------------------


def _marginal_parts(Phi, R, w, sigma, sigma_mu, sum_log_w=None):
    """Log marginal of residuals with leaves integrated out, plus the
    Cholesky factor of the leaf posterior precision and the scaled
    cross-moment needed for leaf draws."""
    n, num_leaves = Phi.shape
    sigma2 = sigma * sigma
    if n == 0:
        chol = np.eye(num_leaves) / sigma_mu
        return 0.0, chol, np.zeros(num_leaves)
    if sum_log_w is None:
        sum_log_w = float(np.sum(np.log(w)))
    wphi = Phi * w[:, None]
    lam = (Phi.T @ wphi) / sigma2
    lam[np.diag_indices_from(lam)] += 1.0 / (sigma_mu * sigma_mu)
    wr = w * R
    b = (Phi.T @ wr) / sigma2
    try:
        chol = np.linalg.cholesky(lam)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular leaf posterior precision") from exc
    u = solve_triangular(chol, b, lower=True, check_finite=False)
    quad = float(R @ wr) / sigma2 - float(u @ u)
    logdet_lam = 2.0 * float(np.sum(np.log(np.diag(chol))))
    logml = (
        -0.5 * n * _LOG_2PI
        - 0.5 * (n * math.log(sigma2) - sum_log_w)
        - num_leaves * math.log(sigma_mu)
        - 0.5 * logdet_lam
        - 0.5 * quad
    )
    return logml, chol, b


def _check_positive_scales(sigma, sigma_mu, w):
    if sigma <= 0.0 or sigma_mu <= 0.0:
        raise ValueError("sigma and sigma_mu must be positive")
    if w is not None and np.any(w <= 0.0):
        raise ValueError("weights must be strictly positive")


def log_marginal(tree: SoftTree, X, residuals, weights, sigma, sigma_mu) -> float:
    """log integral of prod_i N(R_i | Tree(X_i), sigma^2/w_i) against the
    N(0, sigma_mu^2 I) leaf prior."""
    residuals = np.asarray(residuals, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    _check_positive_scales(sigma, sigma_mu, weights)
    Phi = leaf_weight_matrix(tree, np.asarray(X, dtype=np.float64))
    if Phi.shape[0] != residuals.size or residuals.size != weights.size:
        raise ValueError("residuals, weights, and rows must align")
    logml, _, _ = _marginal_parts(Phi, residuals, weights, sigma, sigma_mu)
    return logml


def _draw_leaves_from_parts(rng, chol, b):
    u = solve_triangular(chol, b, lower=True, check_finite=False)
    z = rng.standard_normal(b.size)
    return solve_triangular(chol.T, u + z, lower=False, check_finite=False)


def draw_leaves(rng, tree: SoftTree, X, residuals, weights, sigma, sigma_mu):
    """Sample leaf values from their Gaussian full conditional."""
    residuals = np.asarray(residuals, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    _check_positive_scales(sigma, sigma_mu, weights)
    Phi = leaf_weight_matrix(tree, np.asarray(X, dtype=np.float64))
    _, chol, b = _marginal_parts(Phi, residuals, weights, sigma, sigma_mu)
    return _draw_leaves_from_parts(rng, chol, b)


# -- structure moves ------------------------------------------------------


class TreeProposal(NamedTuple):
    tree: SoftTree
    log_q_ratio: float
    kind: str
    var: int


def propose_tree(
    rng: np.random.Generator,
    tree: SoftTree,
    sparsity: SparsityState,
    hypers: Hypers,
) -> TreeProposal:
    """GROW or PRUNE proposal (probability 1/2 each; GROW forced on stumps)
    with a fresh split drawn from the splitting-rule prior.

    Returns the proposal and the exact log proposal ratio
    log q(T | T') - log q(T' | T).
    """
    leaves = tree.leaves()
    is_stump = len(leaves) == 1
    do_grow = True if is_stump else rng.uniform() < 0.5

    if do_grow:
        idx = int(rng.integers(len(leaves)))
        path, _ = leaves[idx]
        var = int(rng.choice(sparsity.num_cols, p=sparsity.s))
        lo, hi = cut_interval(tree, path, var)
        cut = float(rng.uniform(lo, hi))
        proposal = tree.clone()
        node = proposal.node_at(path)
        node.var = var
        node.cut = cut
        node.mu = 0.0
        node.left = Node.leaf(0.0)
        node.right = Node.leaf(0.0)
        log_fwd = (
            (0.0 if is_stump else _LOG_HALF)
            - math.log(len(leaves))
            + float(sparsity.log_s[var])
            - math.log(hi - lo)
        )
        log_rev = _LOG_HALF - math.log(len(proposal.prunable_branches()))
        return TreeProposal(proposal, log_rev - log_fwd, "grow", var)

    prunable = tree.prunable_branches()
    idx = int(rng.integers(len(prunable)))
    path, branch = prunable[idx]
    var = branch.var
    lo, hi = cut_interval(tree, path, var)
    proposal = tree.clone()
    node = proposal.node_at(path)
    node.var = LEAF
    node.cut = 0.0
    node.mu = 0.0
    node.left = None
    node.right = None
    prop_is_stump = proposal.root.is_leaf
    log_fwd = _LOG_HALF - math.log(len(prunable))
    log_rev = (
        (0.0 if prop_is_stump else _LOG_HALF)
        - math.log(len(leaves) - 1)
        + float(sparsity.log_s[var])
        - math.log(hi - lo)
    )
    return TreeProposal(proposal, log_rev - log_fwd, "prune", var)


def structure_accept_log_prob(
    current: SoftTree,
    proposal: SoftTree,
    log_q_ratio: float,
    X,
    residuals,
    weights,
    sigma,
    sigma_mu,
    hypers: Hypers,
    sparsity: SparsityState,
) -> float:
    """Log MH acceptance ratio for a structure move: marginal-likelihood
    difference plus tree-prior difference plus the proposal ratio."""
    logml_cur = log_marginal(current, X, residuals, weights, sigma, sigma_mu)
    logml_prop = log_marginal(proposal, X, residuals, weights, sigma, sigma_mu)
    prior_diff = log_tree_prior(proposal, hypers, sparsity) - log_tree_prior(
        current, hypers, sparsity
    )
    return logml_prop - logml_cur + prior_diff + log_q_ratio


def mh_tree_update(rng, state: ForestState, t: int, residuals, weights, sum_log_w=None) -> bool:
    """One GROW/PRUNE Metropolis-Hastings step on tree ``t``.

    On acceptance the tree, its cached weights, and the split counts are
    updated in place; on rejection nothing changes.
    """
    tree = state.trees[t]
    logml_cur, _, _ = _marginal_parts(
        state.phis[t], residuals, weights, state.sigma, state.sigma_mu, sum_log_w
    )
    prop = propose_tree(rng, tree, state.sparsity, state.hypers)
    phi_prop = leaf_weight_matrix(prop.tree, state.X)
    logml_prop, _, _ = _marginal_parts(
        phi_prop, residuals, weights, state.sigma, state.sigma_mu, sum_log_w
    )
    prior_diff = log_tree_prior(prop.tree, state.hypers, state.sparsity) - log_tree_prior(
        tree, state.hypers, state.sparsity
    )
    log_alpha = logml_prop - logml_cur + prior_diff + prop.log_q_ratio
    if math.log(rng.uniform()) < log_alpha:
        state.trees[t] = prop.tree
        state.phis[t] = phi_prop
        state.counts[prop.var] += 1 if prop.kind == "grow" else -1
        return True
    return False


def update_tau(rng, state: ForestState, t: int, residuals, weights, sum_log_w=None) -> bool:
    """Random walk on log(tau) targeting the exponential bandwidth prior
    times the marginal likelihood; Jacobian included."""
    tree = state.trees[t]
    if tree.tau <= 0.0:
        raise ValueError("update_tau requires soft mode (tau > 0)")
    logml_cur, _, _ = _marginal_parts(
        state.phis[t], residuals, weights, state.sigma, state.sigma_mu, sum_log_w
    )
    step = float(rng.normal(0.0, TAU_STEP_SD))
    tau_new = tree.tau * math.exp(step)
    phi_new = leaf_weight_matrix(SoftTree(tree.root, tau_new), state.X)
    logml_new, _, _ = _marginal_parts(
        phi_new, residuals, weights, state.sigma, state.sigma_mu, sum_log_w
    )
    log_ratio = (
        logml_new
        - logml_cur
        - (tau_new - tree.tau) / state.hypers.tau_scale
        + step
    )
    if math.log(rng.uniform()) < log_ratio:
        tree.tau = tau_new
        state.phis[t] = phi_new
        return True
    return False


# -- scalar full conditionals ---------------------------------------------


def slice_sample(rng, log_density, x0, width, lower=0.0, max_steps=50):
    """Univariate slice sampler (stepping out + shrinkage) on (lower, inf)."""
    logf0 = log_density(x0)
    if not np.isfinite(logf0):
        raise ValueError("slice sampler started outside the support")
    log_y = logf0 - rng.exponential()
    left = x0 - width * rng.uniform()
    right = left + width
    steps_left = int(rng.integers(max_steps))
    steps_right = max_steps - 1 - steps_left
    if left < lower:
        left = lower
    else:
        while steps_left > 0 and log_density(left) > log_y:
            left -= width
            steps_left -= 1
            if left < lower:
                left = lower
                break
    while steps_right > 0 and log_density(right) > log_y:
        right += width
        steps_right -= 1
    for _ in range(1000):
        x1 = rng.uniform(left, right)
        if log_density(x1) > log_y:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1
    return x0


def update_sigma(rng, state: ForestState, residuals, weights=None) -> float:
    """Slice-sample the noise scale under a half-Cauchy(sigma_hat) prior."""
    residuals = np.asarray(residuals, dtype=np.float64)
    n = residuals.size
    if weights is None:
        ssr = float(residuals @ residuals)
    else:
        weights = np.asarray(weights, dtype=np.float64)
        ssr = float(residuals @ (weights * residuals))
    scale = state.hypers.sigma_hat if state.hypers.sigma_hat is not None else 1.0

    def logf(sig):
        if sig <= 0.0:
            return -np.inf
        return (
            -n * math.log(sig)
            - ssr / (2.0 * sig * sig)
            - math.log1p((sig / scale) ** 2)
        )

    state.sigma = slice_sample(rng, logf, state.sigma, width=scale)
    return state.sigma


def update_sigma_mu(rng, state: ForestState) -> float:
    """Slice-sample the leaf scale: half-Cauchy(sigma_mu_hat) prior times
    the Gaussian likelihood of every leaf value in the ensemble."""
    mus = np.concatenate([t.leaf_values() for t in state.trees])
    m = mus.size
    ssq = float(mus @ mus)
    scale = state.hypers.sigma_mu_hat

    def logf(s):
        if s <= 0.0:
            return -np.inf
        return -m * math.log(s) - ssq / (2.0 * s * s) - math.log1p((s / scale) ** 2)

    state.sigma_mu = slice_sample(rng, logf, state.sigma_mu, width=scale)
    return state.sigma_mu


def update_s(rng, state: ForestState) -> SparsityState:
    """Conjugate Dirichlet update of the splitting proportions.

    Sampled in log space through the Gamma(a + 1) * U^(1/a) identity so
    that ``log_s`` stays finite even when concentrations are tiny.
    """
    num_cols = state.num_cols
    conc = state.sparsity.alpha / num_cols + state.counts
    g = rng.gamma(conc + 1.0)
    u = np.maximum(rng.uniform(size=num_cols), np.finfo(np.float64).tiny)
    log_g = np.log(g) + np.log(u) / conc
    log_s = log_g - logsumexp(log_g)
    state.sparsity = SparsityState(np.exp(log_s), state.sparsity.alpha, log_s=log_s)
    return state.sparsity


def update_alpha(rng, state: ForestState) -> float:
    """Slice-sample the Dirichlet concentration under the beta-prime prior
    on alpha / (alpha + P)."""
    num_cols = state.num_cols
    log_s_sum = float(np.sum(state.sparsity.log_s))
    a = state.hypers.alpha_shape_a
    b = state.hypers.alpha_shape_b

    def logf(alpha):
        if alpha <= 0.0:
            return -np.inf
        frac = alpha / (alpha + num_cols)
        return (
            (a - 1.0) * math.log(frac)
            + (b - 1.0) * math.log1p(-frac)
            + math.log(num_cols)
            - 2.0 * math.log(alpha + num_cols)
            + gammaln(alpha)
            - num_cols * gammaln(alpha / num_cols)
            + (alpha / num_cols - 1.0) * log_s_sum
        )

    alpha = slice_sample(
        rng, logf, state.sparsity.alpha, width=max(1.0, state.sparsity.alpha)
    )
    state.sparsity = SparsityState(
        state.sparsity.s, alpha, log_s=state.sparsity.log_s
    )
    return alpha


# -- the sweep -------------------------------------------------------------


def gibbs_sweep(rng, state: ForestState, X, y, weights) -> ForestState:
    """One full backfitting sweep; the posterior is invariant.

    Order: for each tree (structure, bandwidth, leaves, cache refresh),
    then sigma, sigma_mu, s, alpha as enabled.
    """
    state.bind(X)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if y.size != state.X.shape[0] or w.size != y.size:
        raise ValueError("y and weights must match the design rows")
    opts = state.opts
    sum_log_w = float(np.sum(np.log(w)))
    # fresh total kills float drift from incremental updates
    state.total_fit = state.fits.sum(axis=0)
    for t in range(state.num_tree):
        residuals = y - state.total_fit + state.fits[t]
        mh_tree_update(rng, state, t, residuals, w, sum_log_w)
        if opts.update_tau and state.trees[t].tau > 0.0:
            update_tau(rng, state, t, residuals, w, sum_log_w)
        _, chol, bvec = _marginal_parts(
            state.phis[t], residuals, w, state.sigma, state.sigma_mu, sum_log_w
        )
        leaf_values = _draw_leaves_from_parts(rng, chol, bvec)
        state.trees[t].set_leaf_values(leaf_values)
        new_fit = state.phis[t] @ leaf_values
        state.total_fit += new_fit - state.fits[t]
        state.fits[t] = new_fit
    if opts.update_sigma:
        update_sigma(rng, state, y - state.total_fit, w)
    if opts.update_sigma_mu:
        update_sigma_mu(rng, state)
    if opts.update_s:
        update_s(rng, state)
        update_alpha(rng, state)
    return state
