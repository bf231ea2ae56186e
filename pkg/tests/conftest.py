import numpy as np
import pytest

from shapkan.splines import make_grid
from shapkan.training import init_network


def naive_basis(knots, degree, index, x):
    """Direct recursive basis evaluation, no memoization; the reference
    implementation the vectorized evaluator is checked against."""
    if degree == 0:
        return 1.0 if knots[index] <= x < knots[index + 1] else 0.0
    left_den = knots[index + degree] - knots[index]
    right_den = knots[index + degree + 1] - knots[index + 1]
    left = 0.0
    if left_den != 0:
        left = (x - knots[index]) / left_den * naive_basis(knots, degree - 1, index, x)
    right = 0.0
    if right_den != 0:
        right = (knots[index + degree + 1] - x) / right_den * naive_basis(
            knots, degree - 1, index + 1, x
        )
    return left + right


def random_net(widths, seed, grid=None, spread=0.5):
    """Network with randomized weights, for property tests; the plain
    init_network starting point is too symmetric to exercise much."""
    grid = grid or make_grid(3, 3, -1.0, 1.0)
    rng = np.random.default_rng(seed)
    net = init_network(widths, grid, seed=seed)
    for layer in net.layers:
        layer.base_weight[:] = rng.normal(0.0, 1.0, layer.base_weight.shape)
        layer.spline_weight[:] = rng.normal(0.0, 1.0, layer.spline_weight.shape)
        layer.coef += rng.normal(0.0, spread, layer.coef.shape)
    return net


@pytest.fixture
def grid33():
    return make_grid(3, 3, -1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
