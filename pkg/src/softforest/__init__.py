"""softforest: posterior sampling for smooth decision-tree ensembles.

Fits sum-of-tree regression models whose split rules are logistic gates,
with a Dirichlet sparsity prior over split variables for variable
selection.  The package exposes sklearn-style estimators for the common
model shapes, a low-level `Forest` handle for embedding the ensemble into
custom Gibbs samplers, posterior summaries (inclusion probabilities,
partial dependence), and a CSV-driven command line.
"""

from .forest import Forest, make_forest
from .preprocess import (
    CovariateTransforms,
    Dataset,
    OutcomeScaler,
    apply_transforms,
    fit_transforms,
    unscale_predictions,
)
from .priors import Hypers, SparsityState, branch_prob, theta_B
from .sampler import Opts
from .summaries import partial_dependence, posterior_probs, rmse
from .models import (
    BayesianCausalForest,
    PartialLinearForest,
    SoftForestProbit,
    SoftForestRegressor,
    VaryingCoefficientForest,
)
from .trees import SoftTree, forest_predict, gating, leaf_weights, tree_predict

__version__ = "0.1.0"

__all__ = [
    "Forest",
    "make_forest",
    "Hypers",
    "Opts",
    "SparsityState",
    "branch_prob",
    "theta_B",
    "SoftTree",
    "gating",
    "leaf_weights",
    "tree_predict",
    "forest_predict",
    "CovariateTransforms",
    "Dataset",
    "OutcomeScaler",
    "fit_transforms",
    "apply_transforms",
    "unscale_predictions",
    "SoftForestRegressor",
    "SoftForestProbit",
    "VaryingCoefficientForest",
    "BayesianCausalForest",
    "PartialLinearForest",
    "posterior_probs",
    "partial_dependence",
    "rmse",
    "__version__",
]
