"""Scikit-learn estimator front end.

``KanRegressor`` wraps network construction, training, attribution, and
pruning behind the standard fit/predict surface so the model slots into
pipelines, grid search, and the rest of the sklearn ecosystem.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .attribution import (
    AttributionReport,
    adaptive_shapley,
    antithetic_shapley,
    exact_shapley,
    permutation_shapley,
    vanilla_scores,
)
from .network import forward
from .pruning import PruneCriterion, SamplingConfig, shapkan_prune, vanilla_prune
from .splines import make_grid
from .training import TrainConfig, init_network, train


class KanRegressor(RegressorMixin, BaseEstimator):
    """Kolmogorov-Arnold network regressor with spline edge activations.

    Parameters mirror the training pipeline: the network has layer widths
    ``[n_features, *hidden_widths, 1]``, each edge carrying a silu residual
    plus a spline on a uniform grid over ``domain``. ``lamb`` scales the
    L1-plus-entropy sparsity penalty. With ``warm_start`` a refit continues
    from the current weights (used after pruning).
    """

    def __init__(
        self,
        hidden_widths=(5,),
        grid_intervals: int = 3,
        degree: int = 3,
        domain=(-1.0, 1.0),
        lamb: float = 0.0,
        mu1: float = 1.0,
        mu2: float = 1.0,
        steps: int = 2000,
        learning_rate: float = 0.01,
        batch_size: int | None = None,
        keep_best: bool = False,
        warm_start: bool = False,
        seed: int = 0,
    ):
        self.hidden_widths = hidden_widths
        self.grid_intervals = grid_intervals
        self.degree = degree
        self.domain = domain
        self.lamb = lamb
        self.mu1 = mu1
        self.mu2 = mu2
        self.steps = steps
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.keep_best = keep_best
        self.warm_start = warm_start
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            steps=self.steps,
            learning_rate=self.learning_rate,
            lamb=self.lamb,
            mu1=self.mu1,
            mu2=self.mu2,
            batch_size=self.batch_size,
            seed=self.seed,
            keep_best=self.keep_best,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        start = getattr(self, "network_", None) if self.warm_start else None
        if start is None or start.widths[0] != X.shape[1]:
            grid = make_grid(self.degree, self.grid_intervals, *self.domain)
            widths = [X.shape[1], *map(int, self.hidden_widths), 1]
            start = init_network(widths, grid, seed=self.seed)
        self.network_, self.history_ = train(start, X, y, self._train_config())
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X)
        out, _ = forward(self.network_, X)
        return out[:, 0]

    def attribute(self, X, layer: int = 1, method: str = "exact", **kwargs) -> AttributionReport:
        """Node-importance report for one hidden layer of the fitted network.

        ``method``: exact, permutation, antithetic, or adaptive; sampling
        methods accept ``m``/``epsilon``/``m_max`` and ``seed`` kwargs.
        """
        check_is_fitted(self, "network_")
        X = check_array(X)
        if method == "exact":
            return exact_shapley(self.network_, X, layer)
        if method == "permutation":
            return permutation_shapley(self.network_, X, layer, **kwargs)
        if method == "antithetic":
            return antithetic_shapley(self.network_, X, layer, **kwargs)
        if method == "adaptive":
            return adaptive_shapley(self.network_, X, layer, **kwargs)
        raise ValueError(f"unknown attribution method {method!r}")

    def vanilla_reports(self, X):
        """Incoming/outgoing magnitude reports per hidden layer."""
        check_is_fitted(self, "network_")
        X = check_array(X)
        _, cache = forward(self.network_, X)
        return vanilla_scores(self.network_, cache)

    def pruned(
        self,
        X,
        criterion: PruneCriterion,
        method: str = "shapkan",
        sampling: SamplingConfig | None = None,
    ) -> "KanRegressor":
        """New regressor with low-importance hidden nodes removed.

        The returned estimator is already usable for prediction and is set
        up with ``warm_start`` so a subsequent ``fit`` retrains the pruned
        architecture from the surviving weights.
        """
        check_is_fitted(self, "network_")
        X = check_array(X)
        if method == "shapkan":
            net, plan = shapkan_prune(self.network_, X, criterion, sampling)
        elif method == "vanilla":
            net, plan = vanilla_prune(self.network_, X, criterion)
        else:
            raise ValueError(f"unknown pruning method {method!r}")
        params = self.get_params()
        params["hidden_widths"] = tuple(net.widths[1:-1])
        params["warm_start"] = True
        new = KanRegressor(**params)
        new.network_ = net
        new.history_ = []
        new.n_features_in_ = self.n_features_in_
        new.prune_plan_ = plan
        return new
