"""Model drivers composing the forest handle, as sklearn-style estimators.

`SoftForestRegressor` fits the Gaussian regression model directly.  The
other estimators embed one or two forests in a larger Gibbs sampler:
probit classification via latent-variable data augmentation, a
varying-coefficient model (and its causal-forest special case), and a
partial linear model with a conjugate flat-prior coefficient update.

All estimators accept a DataFrame (mixed numeric/categorical columns) or a
numeric array for ``X``, handle covariate/outcome scaling internally, and
are deterministic given ``random_state``.
"""

from __future__ import annotations

import math

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular
from scipy.stats import norm
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.exceptions import NotFittedError

from .errors import ContractError
from .forest import make_forest
from .preprocess import CovariateTransforms, OutcomeScaler, coerce_table
from .priors import Hypers, estimate_sigma_hat
from .sampler import Opts
from .trees import deserialize_forest, forest_predict
from .validation import check_vector

__all__ = [
    "truncated_normal",
    "update_beta",
    "SoftForestRegressor",
    "SoftForestProbit",
    "VaryingCoefficientForest",
    "BayesianCausalForest",
    "PartialLinearForest",
]

# Tail boundary (in standard deviations) past which inverse-CDF sampling is
# swapped for exponential rejection.
_TAIL_SWITCH = 5.0

_P_FLOOR = 1e-300
_P_CEIL = 1.0 - 1e-16


def _std_lower_truncated(rng, a: np.ndarray) -> np.ndarray:
    """Standard normal draws conditioned on Z > a, elementwise."""
    out = np.empty(a.size)
    u = rng.uniform(size=a.size)
    central = a <= _TAIL_SWITCH
    if central.any():
        fa = norm.cdf(a[central])
        out[central] = norm.ppf(fa + u[central] * (1.0 - fa))
    for i in np.flatnonzero(~central):
        ai = a[i]
        lam = 0.5 * (ai + math.sqrt(ai * ai + 4.0))
        while True:
            z = ai + rng.exponential(1.0 / lam)
            if math.log(rng.uniform()) <= -0.5 * (z - lam) ** 2:
                out[i] = z
                break
    return out


def truncated_normal(rng, mean, sd=1.0, lower=-np.inf, upper=np.inf) -> np.ndarray:
    """Normal(mean, sd^2) draws truncated to (lower, upper).

    One-sided truncations use the inverse CDF centrally and exponential
    rejection once the boundary is past 5 standard deviations; two-sided
    truncations use the inverse CDF.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    a = np.broadcast_to((lower - mean) / sd, mean.shape).astype(np.float64)
    b = np.broadcast_to((upper - mean) / sd, mean.shape).astype(np.float64)
    if np.any(a >= b):
        raise ValueError("lower bound must be below upper bound")
    out = np.empty(mean.shape)
    lower_only = np.isfinite(a) & ~np.isfinite(b)
    upper_only = ~np.isfinite(a) & np.isfinite(b)
    two_sided = np.isfinite(a) & np.isfinite(b)
    free = ~np.isfinite(a) & ~np.isfinite(b)
    if two_sided.any():
        u = rng.uniform(size=int(two_sided.sum()))
        fa, fb = norm.cdf(a[two_sided]), norm.cdf(b[two_sided])
        out[two_sided] = norm.ppf(fa + u * (fb - fa))
    if lower_only.any():
        out[lower_only] = _std_lower_truncated(rng, a[lower_only])
    if upper_only.any():
        out[upper_only] = -_std_lower_truncated(rng, -b[upper_only])
    if free.any():
        out[free] = rng.standard_normal(int(free.sum()))
    return mean + sd * out


def update_beta(rng, residuals, Z, sigma_sq: float) -> np.ndarray:
    """Flat-prior conjugate draw for linear coefficients:
    Normal((Z'Z)^-1 Z'R, sigma^2 (Z'Z)^-1)."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    residuals = np.asarray(residuals, dtype=np.float64)
    ztz = Z.T @ Z
    try:
        chol = np.linalg.cholesky(ztz)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Z'Z is singular") from exc
    ztr = Z.T @ residuals
    half = solve_triangular(chol, ztr, lower=True, check_finite=False)
    beta_hat = solve_triangular(chol.T, half, lower=False, check_finite=False)
    z = rng.standard_normal(Z.shape[1])
    return beta_hat + math.sqrt(sigma_sq) * solve_triangular(
        chol.T, z, lower=False, check_finite=False
    )


def _clip_probs(p: np.ndarray) -> np.ndarray:
    return np.clip(p, _P_FLOOR, _P_CEIL)


class _ForestEstimator(BaseEstimator):
    """Shared preprocessing and cached-ensemble plumbing."""

    def _chain_opts(self) -> Opts:
        return Opts(
            num_burn=self.num_burn,
            num_save=self.num_save,
            num_thin=self.num_thin,
            update_s=self.update_s,
            update_sigma=getattr(self, "update_sigma", True),
            update_sigma_mu=self.update_sigma_mu,
            update_tau=self.update_tau,
            cache_trees=self.cache_trees,
        )

    def _fit_features(self, X) -> np.ndarray:
        table = coerce_table(X)
        if len(table) == 0:
            raise ValueError("empty table")
        categorical = set(self.categorical) if self.categorical else None
        self.transforms_ = CovariateTransforms.fit(table, categorical=categorical)
        self.column_map_ = self.transforms_.column_map
        self.variables_ = self.transforms_.variable_names
        return self.transforms_.apply(table)

    def _transform_features(self, X) -> np.ndarray:
        self._check_fitted()
        return self.transforms_.apply(coerce_table(X))

    def _check_fitted(self):
        if not hasattr(self, "transforms_"):
            raise NotFittedError(
                f"this {type(self).__name__} instance is not fitted yet"
            )

    def _require_cache(self):
        self._check_fitted()
        if not getattr(self, "tree_records_", None):
            raise ContractError(
                "prediction on new data requires cache_trees=True at fit time"
            )

    def _eval_records(self, X_mat: np.ndarray, key: str = "trees") -> np.ndarray:
        """Evaluate every cached ensemble on a transformed design matrix."""
        out = np.empty((len(self.tree_records_), X_mat.shape[0]))
        for i, rec in enumerate(self.tree_records_):
            out[i] = forest_predict(deserialize_forest(rec[key]), X_mat)
        return out


class SoftForestRegressor(RegressorMixin, _ForestEstimator):
    """Gaussian regression with a soft decision-tree ensemble.

    Parameters mirror the prior and chain-control knobs: ``num_tree``,
    ``gamma``/``beta`` (tree-shape prior), ``k`` (leaf-scale prior via
    sigma_mu_hat = 0.5/(k sqrt(T))), ``tau_scale`` (bandwidth prior mean),
    ``soft=False`` for hard indicator trees, burn/save/thin lengths, and
    flags for the individual parameter updates.  ``update_s`` enables the
    Dirichlet sparsity prior on split variables.

    After ``fit``: ``y_hat_train_`` / ``y_hat_test_`` hold posterior draws
    of the regression function on the original outcome scale (rows are
    saved iterations), ``sigma_draws_`` the noise-scale draws,
    ``counts_`` the per-column branch counts per iteration, and
    ``tree_records_`` the serialized ensembles (when ``cache_trees``).
    """

    def __init__(
        self,
        num_tree=20,
        gamma=0.95,
        beta=2.0,
        k=2.0,
        tau_scale=0.1,
        sigma_hat=None,
        sigma_mu_hat=None,
        soft=True,
        num_burn=2500,
        num_save=2500,
        num_thin=1,
        update_s=True,
        update_sigma=True,
        update_sigma_mu=True,
        update_tau=True,
        cache_trees=True,
        outcome_scaling="standardize",
        categorical=None,
        random_state=0,
    ):
        self.num_tree = num_tree
        self.gamma = gamma
        self.beta = beta
        self.k = k
        self.tau_scale = tau_scale
        self.sigma_hat = sigma_hat
        self.sigma_mu_hat = sigma_mu_hat
        self.soft = soft
        self.num_burn = num_burn
        self.num_save = num_save
        self.num_thin = num_thin
        self.update_s = update_s
        self.update_sigma = update_sigma
        self.update_sigma_mu = update_sigma_mu
        self.update_tau = update_tau
        self.cache_trees = cache_trees
        self.outcome_scaling = outcome_scaling
        self.categorical = categorical
        self.random_state = random_state

    def fit(self, X, y, X_test=None):
        X_mat = self._fit_features(X)
        y = check_vector(y, X_mat.shape[0], name="y")
        self.scaler_ = OutcomeScaler.fit(y, self.outcome_scaling)
        y_s = self.scaler_.transform(y)
        sigma_hat = (
            self.sigma_hat
            if self.sigma_hat is not None
            else estimate_sigma_hat(X_mat, y_s)
        )
        hypers = Hypers(
            num_tree=self.num_tree,
            gamma=self.gamma,
            beta=self.beta,
            k=self.k,
            sigma_mu_hat=self.sigma_mu_hat,
            sigma_hat=sigma_hat,
            tau_scale=self.tau_scale,
            soft=self.soft,
        )
        opts = self._chain_opts()
        rng = np.random.default_rng(self.random_state)
        forest = make_forest(hypers, opts, X_mat.shape[1], rng)
        num_cols = X_mat.shape[1]
        empty = np.zeros((0, num_cols))
        X_test_mat = (
            self._transform_features(X_test) if X_test is not None else None
        )
        if opts.num_burn:
            forest.do_gibbs(X_mat, y_s, empty, opts.num_burn)
        n_test = 0 if X_test_mat is None else X_test_mat.shape[0]
        train_draws = np.empty((opts.num_save, X_mat.shape[0]))
        test_draws = np.empty((opts.num_save, n_test))
        sigma_draws = np.empty(opts.num_save)
        counts = np.empty((opts.num_save, num_cols), dtype=np.int64)
        records = [] if opts.cache_trees else None
        for it in range(opts.num_save):
            if opts.num_thin > 1:
                forest.do_gibbs(X_mat, y_s, empty, opts.num_thin - 1)
            target = X_test_mat if X_test_mat is not None else empty
            row = forest.do_gibbs(X_mat, y_s, target, 1)[0]
            if X_test_mat is not None:
                test_draws[it] = row
            train_draws[it] = forest.do_predict(X_mat)
            sigma_draws[it] = forest.get_sigma()
            counts[it] = forest.get_counts()
            if records is not None:
                records.append(
                    {"sigma": forest.get_sigma(), "trees": forest.get_trees()}
                )
        self.forest_ = forest
        self.y_hat_train_ = self.scaler_.inverse(train_draws)
        self.y_hat_test_ = (
            self.scaler_.inverse(test_draws) if X_test_mat is not None else None
        )
        self.sigma_draws_ = sigma_draws * self.scaler_.scale
        self.counts_ = counts
        self.tree_records_ = records
        return self

    @property
    def y_hat_train_mean_(self) -> np.ndarray:
        return self.y_hat_train_.mean(axis=0)

    @property
    def y_hat_test_mean_(self) -> np.ndarray:
        if self.y_hat_test_ is None:
            raise ValueError("no test data was supplied to fit")
        return self.y_hat_test_.mean(axis=0)

    def predict_draws(self, X) -> np.ndarray:
        """Posterior draws of the regression function at new rows."""
        self._require_cache()
        X_mat = self._transform_features(X)
        return self.scaler_.inverse(self._eval_records(X_mat))

    def predict(self, X) -> np.ndarray:
        draws = self.predict_draws(X)
        return draws.mean(axis=0)


def _encode_binary_outcome(y):
    """Map a 0/1 numeric vector or two-level categorical to ints; the
    lexicographically first level is 0."""
    arr = np.asarray(y)
    if arr.dtype.kind in "ifb":
        values = np.unique(arr)
        if not np.all(np.isin(values, (0, 1))):
            raise ValueError("binary outcome must contain only 0 and 1")
        return arr.astype(np.int64), np.array([0, 1])
    levels = sorted(str(v) for v in pd.unique(pd.Series(arr).astype(str)))
    if len(levels) != 2:
        raise ValueError(f"outcome must have exactly two levels, got {levels}")
    codes = np.array([levels.index(str(v)) for v in arr], dtype=np.int64)
    return codes, np.array(levels)


class SoftForestProbit(ClassifierMixin, _ForestEstimator):
    """Binary probit classification via truncated-normal data augmentation.

    The latent outcome is Normal(r(x), 1), so the noise scale is pinned at
    one and never updated; the leaf-scale prior center defaults to
    3/sqrt(T) (``k = 1/6``).  Draws of the latent function are stored in
    ``r_train_draws_`` (and ``r_test_draws_``), with corresponding success
    probabilities in ``p_train_draws_`` / ``p_test_draws_``.
    """

    def __init__(
        self,
        num_tree=20,
        gamma=0.95,
        beta=2.0,
        k=1.0 / 6.0,
        tau_scale=0.1,
        sigma_mu_hat=None,
        soft=True,
        num_burn=2500,
        num_save=2500,
        num_thin=1,
        update_s=True,
        update_sigma_mu=True,
        update_tau=True,
        cache_trees=True,
        categorical=None,
        random_state=0,
    ):
        self.num_tree = num_tree
        self.gamma = gamma
        self.beta = beta
        self.k = k
        self.tau_scale = tau_scale
        self.sigma_mu_hat = sigma_mu_hat
        self.soft = soft
        self.num_burn = num_burn
        self.num_save = num_save
        self.num_thin = num_thin
        self.update_s = update_s
        self.update_sigma_mu = update_sigma_mu
        self.update_tau = update_tau
        self.cache_trees = cache_trees
        self.categorical = categorical
        self.random_state = random_state

    def fit(self, X, y, X_test=None):
        X_mat = self._fit_features(X)
        y01, self.classes_ = _encode_binary_outcome(y)
        if y01.size != X_mat.shape[0]:
            raise ValueError("X and y length mismatch")
        self.scaler_ = OutcomeScaler("none", 0.0, 1.0)
        hypers = Hypers(
            num_tree=self.num_tree,
            gamma=self.gamma,
            beta=self.beta,
            k=self.k,
            sigma_mu_hat=self.sigma_mu_hat,
            sigma_hat=1.0,
            tau_scale=self.tau_scale,
            soft=self.soft,
        )
        opts = self._chain_opts()
        opts.update_sigma = False  # latent variance is fixed at 1
        rng = np.random.default_rng(self.random_state)
        forest = make_forest(hypers, opts, X_mat.shape[1], rng)
        X_test_mat = (
            self._transform_features(X_test) if X_test is not None else None
        )
        pos = y01 == 1
        r = forest.do_predict(X_mat)

        def draw_latents(r_now):
            z = np.empty_like(r_now)
            if pos.any():
                z[pos] = truncated_normal(rng, r_now[pos], 1.0, lower=0.0)
            if (~pos).any():
                z[~pos] = truncated_normal(rng, r_now[~pos], 1.0, upper=0.0)
            return z

        for _ in range(opts.num_burn):
            r = forest.do_gibbs(X_mat, draw_latents(r), X_mat, 1)[0]
        n_test = 0 if X_test_mat is None else X_test_mat.shape[0]
        r_train = np.empty((opts.num_save, X_mat.shape[0]))
        r_test = np.empty((opts.num_save, n_test))
        counts = np.empty((opts.num_save, X_mat.shape[1]), dtype=np.int64)
        records = [] if opts.cache_trees else None
        for it in range(opts.num_save):
            for _ in range(opts.num_thin):
                r = forest.do_gibbs(X_mat, draw_latents(r), X_mat, 1)[0]
            r_train[it] = r
            if X_test_mat is not None:
                r_test[it] = forest.do_predict(X_test_mat)
            counts[it] = forest.get_counts()
            if records is not None:
                records.append({"trees": forest.get_trees()})
        self.forest_ = forest
        self.r_train_draws_ = r_train
        self.r_test_draws_ = r_test if X_test_mat is not None else None
        self.p_train_draws_ = _clip_probs(norm.cdf(r_train))
        self.p_test_draws_ = (
            _clip_probs(norm.cdf(r_test)) if X_test_mat is not None else None
        )
        self.counts_ = counts
        self.tree_records_ = records
        return self

    def predict_latent_draws(self, X) -> np.ndarray:
        self._require_cache()
        return self._eval_records(self._transform_features(X))

    def predict_proba_draws(self, X) -> np.ndarray:
        return _clip_probs(norm.cdf(self.predict_latent_draws(X)))

    def predict_proba(self, X) -> np.ndarray:
        p = self.predict_proba_draws(X).mean(axis=0)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        p = self.predict_proba(X)[:, 1]
        return self.classes_[(p > 0.5).astype(int)]


class VaryingCoefficientForest(_ForestEstimator):
    """Varying-coefficient model y = a(x) + z * b(x) + noise.

    Two forests are updated in alternation: the coefficient forest sees the
    residual quotient (y - a) / z under heteroskedastic weights z^2, and
    the intercept forest sees y - z * b; the noise scale is shared between
    them.  ``z`` must be nonzero everywhere.
    """

    def __init__(
        self,
        num_tree=20,
        gamma=0.95,
        beta=2.0,
        k=2.0,
        tau_scale=0.1,
        soft=True,
        num_burn=2500,
        num_save=2500,
        num_thin=1,
        update_s=True,
        update_sigma=True,
        update_sigma_mu=True,
        update_tau=True,
        cache_trees=True,
        categorical=None,
        random_state=0,
    ):
        self.num_tree = num_tree
        self.gamma = gamma
        self.beta = beta
        self.k = k
        self.tau_scale = tau_scale
        self.soft = soft
        self.num_burn = num_burn
        self.num_save = num_save
        self.num_thin = num_thin
        self.update_s = update_s
        self.update_sigma = update_sigma
        self.update_sigma_mu = update_sigma_mu
        self.update_tau = update_tau
        self.cache_trees = cache_trees
        self.categorical = categorical
        self.random_state = random_state

    def fit(self, X, y, z, X_test=None, z_test=None):
        X_mat = self._fit_features(X)
        y = check_vector(y, X_mat.shape[0], name="y")
        z = check_vector(z, X_mat.shape[0], name="z")
        if np.any(z == 0.0):
            raise ValueError("z must be nonzero for every observation")
        self.scaler_ = OutcomeScaler.fit(y, "standardize")
        y_s = self.scaler_.transform(y)
        sigma_hat = estimate_sigma_hat(X_mat, y_s)
        hypers = Hypers(
            num_tree=self.num_tree,
            gamma=self.gamma,
            beta=self.beta,
            k=self.k,
            sigma_hat=sigma_hat,
            tau_scale=self.tau_scale,
            soft=self.soft,
        )
        opts = self._chain_opts()
        rng = np.random.default_rng(self.random_state)
        alpha_forest = make_forest(hypers, opts, X_mat.shape[1], rng)
        beta_forest = make_forest(hypers, opts, X_mat.shape[1], rng)
        X_test_mat = (
            self._transform_features(X_test) if X_test is not None else None
        )
        if X_test_mat is not None and z_test is not None:
            z_test = check_vector(z_test, X_test_mat.shape[0], name="z_test")
        weights = z * z
        alpha = alpha_forest.do_predict(X_mat)

        def one_iteration(alpha_now):
            r_beta = (y_s - alpha_now) / z
            beta_forest.set_sigma(alpha_forest.get_sigma())
            beta_now = beta_forest.do_gibbs_weighted(
                X_mat, r_beta, weights, X_mat, 1
            )[0]
            alpha_forest.set_sigma(beta_forest.get_sigma())
            r_alpha = y_s - z * beta_now
            alpha_next = alpha_forest.do_gibbs(X_mat, r_alpha, X_mat, 1)[0]
            return alpha_next, beta_now

        for _ in range(opts.num_burn):
            alpha, _ = one_iteration(alpha)
        n = X_mat.shape[0]
        n_test = 0 if X_test_mat is None else X_test_mat.shape[0]
        alpha_draws = np.empty((opts.num_save, n))
        beta_draws = np.empty((opts.num_save, n))
        sigma_draws = np.empty(opts.num_save)
        alpha_test = np.empty((opts.num_save, n_test))
        beta_test = np.empty((opts.num_save, n_test))
        records = [] if opts.cache_trees else None
        for it in range(opts.num_save):
            for _ in range(opts.num_thin):
                alpha, beta_now = one_iteration(alpha)
            alpha_draws[it] = alpha
            beta_draws[it] = beta_now
            sigma_draws[it] = alpha_forest.get_sigma()
            if X_test_mat is not None:
                alpha_test[it] = alpha_forest.do_predict(X_test_mat)
                beta_test[it] = beta_forest.do_predict(X_test_mat)
            if records is not None:
                records.append(
                    {
                        "sigma": alpha_forest.get_sigma(),
                        "alpha_trees": alpha_forest.get_trees(),
                        "beta_trees": beta_forest.get_trees(),
                    }
                )
        scale, loc = self.scaler_.scale, self.scaler_.location
        self.alpha_draws_ = alpha_draws * scale + loc
        self.beta_draws_ = beta_draws * scale
        self.sigma_draws_ = sigma_draws * scale
        self.mu_draws_ = self.alpha_draws_ + z[None, :] * self.beta_draws_
        self.z_train_ = z
        if X_test_mat is not None:
            self.alpha_test_draws_ = alpha_test * scale + loc
            self.beta_test_draws_ = beta_test * scale
            self.mu_test_draws_ = (
                self.alpha_test_draws_ + z_test[None, :] * self.beta_test_draws_
                if z_test is not None
                else None
            )
        else:
            self.alpha_test_draws_ = None
            self.beta_test_draws_ = None
            self.mu_test_draws_ = None
        self.tree_records_ = records
        return self

    def predict_coefficient_draws(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Draws of (a(x), b(x)) at new rows, original outcome scale."""
        self._require_cache()
        X_mat = self._transform_features(X)
        alpha = self._eval_records(X_mat, "alpha_trees")
        beta = self._eval_records(X_mat, "beta_trees")
        scale, loc = self.scaler_.scale, self.scaler_.location
        return alpha * scale + loc, beta * scale

    def predict_draws(self, X, z) -> np.ndarray:
        alpha, beta = self.predict_coefficient_draws(X)
        z = check_vector(z, alpha.shape[1], name="z")
        return alpha + z[None, :] * beta

    def predict(self, X, z) -> np.ndarray:
        return self.predict_draws(X, z).mean(axis=0)


class BayesianCausalForest(VaryingCoefficientForest):
    """Causal-effect model for a binary treatment.

    Fits the varying-coefficient model with z = 1/2 - A, under which the
    conditional average treatment effect is the negated coefficient
    surface (a unit increase in A decreases z by one).  ``cace_draws_``
    holds per-observation treatment-effect draws and ``pace_draws_`` their
    per-draw average.
    """

    def fit(self, X, y, treatment, X_test=None):
        treatment = np.asarray(treatment)
        if not np.all(np.isin(treatment, (0, 1))):
            raise ValueError("treatment must be binary 0/1")
        z = 0.5 - treatment.astype(np.float64)
        super().fit(X, y, z, X_test=X_test)
        self.cace_draws_ = -self.beta_draws_
        self.pace_draws_ = self.cace_draws_.mean(axis=1)
        if self.beta_test_draws_ is not None:
            self.cace_test_draws_ = -self.beta_test_draws_
        else:
            self.cace_test_draws_ = None
        return self

    def predict_effect_draws(self, X) -> np.ndarray:
        """Draws of the conditional average treatment effect at new rows."""
        _, beta = self.predict_coefficient_draws(X)
        return -beta


class PartialLinearForest(_ForestEstimator):
    """Partial linear model y = r(x) + Z' beta + noise.

    ``Z`` is an N-by-q design treated linearly with a flat prior; its
    coefficient draw is the exact conjugate Gaussian update, alternated
    with forest sweeps on y - Z beta.  No intercept column is added
    implicitly; the forest absorbs the level.
    """

    def __init__(
        self,
        num_tree=20,
        gamma=0.95,
        beta=2.0,
        k=2.0,
        tau_scale=0.1,
        soft=True,
        num_burn=2500,
        num_save=2500,
        num_thin=1,
        update_s=True,
        update_sigma=True,
        update_sigma_mu=True,
        update_tau=True,
        cache_trees=True,
        categorical=None,
        random_state=0,
    ):
        self.num_tree = num_tree
        self.gamma = gamma
        self.beta = beta
        self.k = k
        self.tau_scale = tau_scale
        self.soft = soft
        self.num_burn = num_burn
        self.num_save = num_save
        self.num_thin = num_thin
        self.update_s = update_s
        self.update_sigma = update_sigma
        self.update_sigma_mu = update_sigma_mu
        self.update_tau = update_tau
        self.cache_trees = cache_trees
        self.categorical = categorical
        self.random_state = random_state

    def fit(self, X, y, Z, X_test=None, Z_test=None):
        X_mat = self._fit_features(X)
        y = check_vector(y, X_mat.shape[0], name="y")
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.shape[0] != X_mat.shape[0]:
            raise ValueError("Z rows must match X rows")
        try:
            np.linalg.cholesky(Z.T @ Z)
        except np.linalg.LinAlgError as exc:
            raise ValueError("Z'Z is singular") from exc
        self.scaler_ = OutcomeScaler.fit(y, "standardize")
        y_s = self.scaler_.transform(y)
        sigma_hat = estimate_sigma_hat(X_mat, y_s)
        hypers = Hypers(
            num_tree=self.num_tree,
            gamma=self.gamma,
            beta=self.beta,
            k=self.k,
            sigma_hat=sigma_hat,
            tau_scale=self.tau_scale,
            soft=self.soft,
        )
        opts = self._chain_opts()
        rng = np.random.default_rng(self.random_state)
        forest = make_forest(hypers, opts, X_mat.shape[1], rng)
        X_test_mat = (
            self._transform_features(X_test) if X_test is not None else None
        )
        r = forest.do_predict(X_mat)
        sigma = forest.get_sigma()

        def one_iteration(r_now, sigma_now):
            beta_now = update_beta(rng, y_s - r_now, Z, sigma_now**2)
            eta_now = Z @ beta_now
            r_next = forest.do_gibbs(X_mat, y_s - eta_now, X_mat, 1)[0]
            return r_next, forest.get_sigma(), beta_now, eta_now

        for _ in range(opts.num_burn):
            r, sigma, _, _ = one_iteration(r, sigma)
        n = X_mat.shape[0]
        q = Z.shape[1]
        n_test = 0 if X_test_mat is None else X_test_mat.shape[0]
        r_draws = np.empty((opts.num_save, n))
        beta_draws = np.empty((opts.num_save, q))
        eta_draws = np.empty((opts.num_save, n))
        sigma_draws = np.empty(opts.num_save)
        r_test = np.empty((opts.num_save, n_test))
        records = [] if opts.cache_trees else None
        for it in range(opts.num_save):
            for _ in range(opts.num_thin):
                r, sigma, beta_now, eta_now = one_iteration(r, sigma)
            r_draws[it] = r
            beta_draws[it] = beta_now
            eta_draws[it] = eta_now
            sigma_draws[it] = sigma
            if X_test_mat is not None:
                r_test[it] = forest.do_predict(X_test_mat)
            if records is not None:
                records.append(
                    {
                        "sigma": sigma,
                        "beta": [float(v) for v in beta_now],
                        "trees": forest.get_trees(),
                    }
                )
        scale, loc = self.scaler_.scale, self.scaler_.location
        self.r_draws_ = r_draws * scale + loc
        self.beta_draws_ = beta_draws * scale
        self.eta_draws_ = eta_draws * scale
        self.sigma_draws_ = sigma_draws * scale
        self.mu_draws_ = self.r_draws_ + self.eta_draws_
        if X_test_mat is not None:
            self.r_test_draws_ = r_test * scale + loc
            self.eta_test_draws_ = (
                self.beta_draws_ @ np.asarray(Z_test, dtype=np.float64).T
                if Z_test is not None
                else None
            )
        else:
            self.r_test_draws_ = None
            self.eta_test_draws_ = None
        self.tree_records_ = records
        return self

    def predict_draws(self, X, Z) -> np.ndarray:
        """Draws of r(x) + Z' beta at new rows, original outcome scale."""
        self._require_cache()
        X_mat = self._transform_features(X)
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim == 1:
            Z = Z[:, None]
        r = self._eval_records(X_mat) * self.scaler_.scale + self.scaler_.location
        betas = np.array([rec["beta"] for rec in self.tree_records_])
        return r + (betas * self.scaler_.scale) @ Z.T

    def predict(self, X, Z) -> np.ndarray:
        return self.predict_draws(X, Z).mean(axis=0)
