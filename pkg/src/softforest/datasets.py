"""Synthetic benchmark data generators used by the CLI and the test suite."""

from __future__ import annotations

import numpy as np
import pandas as pd
from scipy.stats import norm

__all__ = [
    "friedman_function",
    "sim_friedman",
    "sim_sine",
    "sim_probit",
    "sim_vc",
]


def friedman_function(X: np.ndarray) -> np.ndarray:
    """10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5."""
    if X.shape[1] < 5:
        raise ValueError("friedman function needs at least 5 columns")
    return (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
    )


def _x_frame(X: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame(X, columns=[f"X.{j + 1}" for j in range(X.shape[1])])


def sim_friedman(rng: np.random.Generator, n: int, p: int, sigma: float) -> pd.DataFrame:
    """Gaussian regression with the sparse Friedman mean; columns beyond the
    first five are nuisance predictors."""
    if p < 5:
        raise ValueError("p must be at least 5")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    X = rng.uniform(size=(n, p))
    mu = friedman_function(X)
    df = _x_frame(X)
    df["Y"] = mu + sigma * rng.standard_normal(n)
    df["mu"] = mu
    return df


def sim_sine(rng: np.random.Generator, n: int, sigma: float = 0.1) -> pd.DataFrame:
    """One covariate, Y = sin(2 pi x) + noise."""
    x = rng.uniform(size=(n, 1))
    mu = np.sin(2.0 * np.pi * x[:, 0])
    df = _x_frame(x)
    df["Y"] = mu + sigma * rng.standard_normal(n)
    df["mu"] = mu
    return df


def sim_probit(rng: np.random.Generator, n: int, p: int) -> pd.DataFrame:
    """Binary outcome with latent r = 3 (friedman - 14) / 5; the ``mu``
    column holds the true latent function."""
    if p < 5:
        raise ValueError("p must be at least 5")
    X = rng.uniform(size=(n, p))
    r = 3.0 * (friedman_function(X) - 14.0) / 5.0
    y = (rng.uniform(size=n) < norm.cdf(r)).astype(np.int64)
    df = _x_frame(X)
    df["Y"] = y
    df["mu"] = r
    return df


def sim_vc(rng: np.random.Generator, n: int, p: int, sigma: float = 1.0) -> pd.DataFrame:
    """Varying-coefficient data with coefficient surface equal to the
    Friedman function and zero intercept surface.

    The linear covariate Z is a random sign times Uniform(0.5, 1.5):
    bounded away from zero (the coefficient update divides by Z) and
    mean-zero, which keeps the intercept and coefficient surfaces cleanly
    identified.
    """
    if p < 5:
        raise ValueError("p must be at least 5")
    X = rng.uniform(size=(n, p))
    beta = friedman_function(X)
    z = rng.uniform(0.5, 1.5, size=n) * rng.choice([-1.0, 1.0], size=n)
    mu = z * beta
    df = _x_frame(X)
    df["Z"] = z
    df["Y"] = mu + sigma * rng.standard_normal(n)
    df["mu"] = mu
    return df
