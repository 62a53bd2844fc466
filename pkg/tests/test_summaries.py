import math
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from softforest.datasets import sim_friedman
from softforest.errors import ContractError
from softforest.models import SoftForestRegressor
from softforest.preprocess import CovariateTransforms, OutcomeScaler
from softforest.summaries import partial_dependence, posterior_probs, rmse
from softforest.trees import Node, SoftTree, serialize_tree


class TestPosteriorProbs:
    def test_always_used_variable(self):
        counts = np.array([[3, 0], [1, 0], [2, 0]])
        vs = posterior_probs(counts, {"a": [0], "b": [1]})
        assert vs.post_probs[0] == 1.0 and vs.post_probs[1] == 0.0
        np.testing.assert_array_equal(vs.median_probability_model, [1])

    def test_single_iteration_definitions(self):
        vs = posterior_probs(np.array([[2, 0]]), {"a": [0], "b": [1]})
        np.testing.assert_array_equal(vs.post_probs, [1.0, 0.0])
        np.testing.assert_array_equal(vs.varimp, [2.0, 0.0])

    def test_dummy_block_aggregation(self):
        # variable "c" spans two design columns; either column counts
        counts = np.array([[0, 1, 0], [0, 0, 2], [0, 0, 0], [0, 1, 1]])
        vs = posterior_probs(counts, {"a": [0], "c": [1, 2]})
        np.testing.assert_allclose(vs.post_probs, [0.0, 0.75])
        np.testing.assert_allclose(vs.varimp, [0.0, 1.25])
        np.testing.assert_array_equal(vs.median_probability_model, [2])

    def test_pip_monotone_in_added_usage(self, rng):
        counts = rng.integers(0, 3, size=(40, 2))
        vs1 = posterior_probs(counts, {"a": [0], "b": [1]})
        extra = np.vstack([counts, np.tile([1, 0], (10, 1))])
        vs2 = posterior_probs(extra, {"a": [0], "b": [1]})
        assert vs2.post_probs[0] >= vs1.post_probs[0] or math.isclose(
            vs2.post_probs[0], 1.0
        )

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            posterior_probs(np.array([[-1]]), {"a": [0]})

    def test_accepts_fitted_model_object(self):
        fit = SimpleNamespace(counts_=np.array([[1, 0]]), column_map_={"a": [0], "b": [1]})
        vs = posterior_probs(fit)
        assert vs.variables == ["a", "b"]


def _stub_fit(table, records, scaler=None):
    transforms = CovariateTransforms.fit(table)
    return SimpleNamespace(
        tree_records_=records,
        transforms_=transforms,
        scaler_=scaler or OutcomeScaler("none", 0.0, 1.0),
    )


def _constant_forest(mu, count=3, tau=0.1):
    return [serialize_tree(SoftTree(Node.leaf(mu / count), tau)) for _ in range(count)]


class TestPartialDependence:
    def test_constant_ensemble(self, rng):
        table = pd.DataFrame({"a": rng.uniform(size=8), "b": rng.uniform(size=8)})
        records = [{"trees": _constant_forest(1.5)} for _ in range(4)]
        fit = _stub_fit(table, records)
        pd_matrix, tidy = partial_dependence(fit, table, "a", [0.1, 0.5, 0.9])
        np.testing.assert_allclose(pd_matrix, 1.5, atol=1e-12)
        assert list(tidy.columns) == ["draw_index", "grid_value", "pd_value"]
        assert len(tidy) == 12

    def test_never_split_variable_is_constant(self, rng):
        table = pd.DataFrame({"a": rng.uniform(size=10), "b": rng.uniform(size=10)})
        # trees split only on column 0 ("a"); PD over "b" must be flat
        tree = SoftTree(Node.branch(0, 0.5, Node.leaf(-1.0), Node.leaf(2.0)), 0.05)
        records = [{"trees": [serialize_tree(tree)]} for _ in range(3)]
        fit = _stub_fit(table, records)
        pd_matrix, _ = partial_dependence(fit, table, "b", [0.0, 0.3, 0.6, 1.0])
        for row in pd_matrix:
            np.testing.assert_allclose(row, row[0], atol=1e-14)

    def test_single_background_row(self, rng):
        table = pd.DataFrame({"a": [0.4], "b": [0.6]})
        tree = SoftTree(Node.branch(0, 0.5, Node.leaf(-1.0), Node.leaf(2.0)), 0.0)
        records = [{"trees": [serialize_tree(tree)]}]
        fit = _stub_fit(table, records)
        pd_matrix, _ = partial_dependence(fit, table, "a", [0.4])
        # the modified row is the row itself; PD equals its prediction
        from softforest.trees import deserialize_forest, forest_predict

        X = fit.transforms_.apply(table.assign(a=0.4))
        expected = forest_predict(deserialize_forest(records[0]["trees"]), X)[0]
        np.testing.assert_allclose(pd_matrix[0, 0], expected, atol=1e-14)

    def test_linearity_over_tree_sets(self, rng):
        table = pd.DataFrame({"a": rng.uniform(size=6), "b": rng.uniform(size=6)})
        from conftest import random_tree

        set_a = [serialize_tree(random_tree(rng, 2, tau=0.1)) for _ in range(2)]
        set_b = [serialize_tree(random_tree(rng, 2, tau=0.1)) for _ in range(3)]
        grid = [0.2, 0.7]
        pd_a, _ = partial_dependence(_stub_fit(table, [{"trees": set_a}]), table, "a", grid)
        pd_b, _ = partial_dependence(_stub_fit(table, [{"trees": set_b}]), table, "a", grid)
        pd_ab, _ = partial_dependence(
            _stub_fit(table, [{"trees": set_a + set_b}]), table, "a", grid
        )
        np.testing.assert_allclose(pd_ab, pd_a + pd_b, atol=1e-12)

    def test_categorical_grid_and_unseen_level(self, rng):
        table = pd.DataFrame(
            {"g": rng.choice(["u", "v"], size=12), "x": rng.uniform(size=12)}
        )
        tree = SoftTree(Node.branch(0, 0.5, Node.leaf(0.0), Node.leaf(1.0)), 0.0)
        fit = _stub_fit(table, [{"trees": [serialize_tree(tree)]}])
        pd_matrix, tidy = partial_dependence(fit, table, "g", ["u", "v"])
        assert pd_matrix.shape == (1, 2)
        with pytest.raises(ValueError, match="unseen level"):
            partial_dependence(fit, table, "g", ["w"])

    def test_unknown_variable(self, rng):
        table = pd.DataFrame({"a": rng.uniform(size=5)})
        fit = _stub_fit(table, [{"trees": _constant_forest(0.0)}])
        with pytest.raises(ValueError, match="unknown variable"):
            partial_dependence(fit, table, "zz", [0.1])

    def test_requires_cached_trees(self, rng):
        table = pd.DataFrame({"a": rng.uniform(size=5)})
        fit = _stub_fit(table, [])
        fit.tree_records_ = None
        with pytest.raises(ContractError):
            partial_dependence(fit, table, "a", [0.1])

    def test_additive_truth_recovers_slope(self, rng):
        train = sim_friedman(rng, 150, 5, 1.0)
        X = train.drop(columns=["Y", "mu"])
        model = SoftForestRegressor(num_burn=400, num_save=200, random_state=44)
        model.fit(X, train["Y"])
        grid = np.linspace(0.05, 0.95, 10)
        pd_matrix, _ = partial_dependence(model, X, "X.4", grid)
        mean_pd = pd_matrix.mean(axis=0)
        slope = np.polyfit(grid, mean_pd, 1)[0]
        assert abs(slope - 10.0) <= 2.5


class TestRmse:
    def test_zero_on_identical(self, rng):
        v = rng.normal(size=30)
        assert rmse(v, v) == 0.0

    def test_arithmetic(self):
        np.testing.assert_allclose(rmse([0.0, 0.0], [3.0, 4.0]), math.sqrt(12.5))

    def test_symmetry(self, rng):
        x, y = rng.normal(size=20), rng.normal(size=20)
        assert rmse(x, y) == rmse(y, x)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rmse([1.0], [1.0, 2.0])
