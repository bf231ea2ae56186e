import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from shapkan.datasets import SampleSpec, generate
from shapkan.estimator import KanRegressor
from shapkan.pruning import PruneCriterion


@pytest.fixture(scope="module")
def xy():
    return generate("multiplication", SampleSpec(n=800, seed=0))


@pytest.fixture(scope="module")
def fitted(xy):
    x, y = xy
    return KanRegressor(steps=400, learning_rate=0.02, seed=1).fit(x, y)


class TestEstimatorBasics:
    def test_fit_predict_score(self, fitted, xy):
        x, y = xy
        pred = fitted.predict(x)
        assert pred.shape == (len(y),)
        assert fitted.score(x, y) > 0.9

    def test_not_fitted_error(self):
        with pytest.raises(NotFittedError):
            KanRegressor().predict(np.zeros((3, 2)))

    def test_get_set_params_clone(self):
        est = KanRegressor(hidden_widths=(4,), lamb=0.1, steps=10)
        params = est.get_params()
        assert params["hidden_widths"] == (4,)
        assert params["lamb"] == 0.1
        dup = clone(est)
        assert dup.get_params() == params

    def test_deterministic_given_seed(self, xy):
        x, y = xy
        a = KanRegressor(steps=60, seed=3).fit(x, y).predict(x[:20])
        b = KanRegressor(steps=60, seed=3).fit(x, y).predict(x[:20])
        np.testing.assert_array_equal(a, b)

    def test_history_recorded(self, fitted):
        assert len(fitted.history_) == 400
        assert fitted.history_[-1].total < fitted.history_[0].total

    def test_pipeline_composition(self, xy):
        x, y = xy
        pipe = make_pipeline(StandardScaler(), KanRegressor(steps=60, seed=0))
        pipe.fit(x, y)
        assert pipe.predict(x[:5]).shape == (5,)


class TestEstimatorExtensions:
    def test_attribute_exact(self, fitted, xy):
        x, _ = xy
        report = fitted.attribute(x[:200], layer=1, method="exact")
        assert len(report.shapley) == 5
        assert report.method == "exact"

    def test_attribute_sampling(self, fitted, xy):
        x, _ = xy
        report = fitted.attribute(x[:100], layer=1, method="antithetic", m=8, seed=2)
        assert report.permutations_used == 8

    def test_attribute_unknown_method(self, fitted, xy):
        with pytest.raises(ValueError):
            fitted.attribute(xy[0][:50], method="bogus")

    def test_vanilla_reports(self, fitted, xy):
        reports = fitted.vanilla_reports(xy[0][:100])
        assert list(reports) == [1]
        assert reports[1][0].method == "vanilla_in"

    def test_pruned_then_warm_refit(self, fitted, xy):
        x, y = xy
        smaller = fitted.pruned(x[:300], PruneCriterion.number(3))
        assert smaller.network_.widths == [2, 2, 1]
        assert smaller.get_params()["hidden_widths"] == (2,)
        before = smaller.predict(x[:10])  # usable before refit
        smaller.steps = 150
        smaller.fit(x, y)
        assert smaller.network_.widths == [2, 2, 1]
        after = smaller.predict(x[:10])
        assert not np.array_equal(before, after)

    def test_pruned_vanilla_method(self, fitted, xy):
        smaller = fitted.pruned(xy[0][:300], PruneCriterion.number(3), method="vanilla")
        assert smaller.network_.widths == [2, 2, 1]
        assert smaller.prune_plan_.entries[0].removed
