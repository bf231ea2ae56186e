import json

import numpy as np
import pytest

from shapkan.network import (
    CoalitionMask,
    KanLayer,
    KanNetwork,
    forward,
    forward_from,
    forward_masked,
    from_dict,
    load_model,
    node_l1_magnitudes,
    save_model,
    silu,
    to_dict,
)
from shapkan.splines import make_grid
from shapkan.training import init_network

from conftest import naive_basis, random_net


def zero_net(widths, grid):
    net = init_network(widths, grid, seed=0)
    for layer in net.layers:
        layer.base_weight[:] = 0.0
        layer.spline_weight[:] = 0.0
        layer.coef[:] = 0.0
    return net


def forward_oracle(net, x):
    """Per-sample, per-edge re-implementation of the layer sums using the
    naive recursive basis; no vectorization shared with the library path."""
    outs = np.empty((x.shape[0], net.widths[-1]))
    for n, row in enumerate(x):
        values = list(row)
        for layer in net.layers:
            nxt = []
            for j in range(layer.n_out):
                acc = 0.0
                for i in range(layer.n_in):
                    xi = values[i]
                    spline = sum(
                        layer.coef[j, i, m] * naive_basis(layer.grid.knots, layer.grid.degree, m, xi)
                        for m in range(layer.grid.num_basis)
                    )
                    acc += layer.base_weight[j, i] * (xi / (1 + np.exp(-xi)))
                    acc += layer.spline_weight[j, i] * spline
                nxt.append(acc)
            values = nxt
        outs[n] = values
    return outs


class TestForward:
    def test_zero_network_outputs_zero(self, grid33, rng):
        net = zero_net([2, 5, 1], grid33)
        out, cache = forward(net, rng.uniform(-1, 1, (20, 2)))
        np.testing.assert_array_equal(out, np.zeros((20, 1)))
        assert len(cache.node_values) == 3

    def test_partition_of_unity_edge(self, grid33, rng):
        # single edge, unit spline weight, all-one coefficients: the spline
        # part sums the basis, which is 1 anywhere in the domain
        net = zero_net([1, 1], grid33)
        net.layers[0].spline_weight[:] = 1.0
        net.layers[0].coef[:] = 1.0
        out, _ = forward(net, rng.uniform(-1, 1, (50, 1)))
        np.testing.assert_allclose(out, 1.0, atol=1e-12)

    def test_matches_per_sample_oracle(self, rng):
        net = random_net([2, 5, 1], seed=11)
        x = rng.uniform(-1, 1, (16, 2))
        out, _ = forward(net, x)
        np.testing.assert_allclose(out, forward_oracle(net, x), atol=1e-10)

    def test_matches_oracle_deeper(self, rng):
        net = random_net([3, 4, 2, 2], seed=12, spread=0.2)
        x = rng.uniform(-1, 1, (8, 3))
        out, _ = forward(net, x)
        np.testing.assert_allclose(out, forward_oracle(net, x), atol=1e-10)

    def test_shape_mismatch(self, grid33):
        net = zero_net([2, 3, 1], grid33)
        with pytest.raises(ValueError):
            forward(net, np.zeros((4, 3)))
        with pytest.raises(ValueError):
            forward(net, np.array([[np.nan, 0.0]]))

    def test_parameter_count(self, grid33):
        net = init_network([2, 5, 1], grid33, seed=0)
        assert net.parameter_count() == 120  # 15 edges x (6 coef + 2 weights)


class TestForwardMasked:
    def test_full_mask_equals_forward(self, rng):
        net = random_net([2, 4, 1], seed=3)
        x = rng.uniform(-1, 1, (30, 2))
        out, _ = forward(net, x)
        masked = forward_masked(net, x, CoalitionMask.full(net, 1))
        np.testing.assert_array_equal(masked, out)

    def test_empty_mask_zeroes_presums(self, rng):
        # masked layer feeds the output directly, so the output is the
        # empty sum
        net = random_net([2, 4, 1], seed=4)
        x = rng.uniform(-1, 1, (30, 2))
        masked = forward_masked(net, x, CoalitionMask.empty(net, 1))
        np.testing.assert_array_equal(masked, np.zeros((30, 1)))

    def test_empty_mask_propagates_phi_of_zero(self, rng):
        net = random_net([2, 3, 2, 1], seed=5)
        x = rng.uniform(-1, 1, (10, 2))
        masked = forward_masked(net, x, CoalitionMask.empty(net, 1))
        # the masked layer's sums vanish, then downstream layers see phi(0),
        # which is not zero in general
        zeros_after = np.zeros((10, net.widths[2]))
        expected = forward_from(net, 2, zeros_after, CoalitionMask.full(net, 2))
        np.testing.assert_allclose(masked, expected, atol=1e-12)
        assert np.abs(masked).max() > 0

    def test_two_node_exclusion_matches_hand_sum(self, rng):
        net = random_net([2, 2, 1], seed=6)
        x = rng.uniform(-1, 1, (25, 2))
        full, cache = forward(net, x)
        hidden = cache.node_values[1]
        out_layer = net.layers[1]
        contributions = []
        for i in range(2):
            xi = hidden[:, i]
            spline = sum(
                out_layer.coef[0, i, m]
                * np.array([naive_basis(out_layer.grid.knots, 3, m, v) for v in xi])
                for m in range(out_layer.grid.num_basis)
            )
            contributions.append(out_layer.base_weight[0, i] * silu(xi)
                                 + out_layer.spline_weight[0, i] * spline)
        only_node_0 = forward_masked(net, x, CoalitionMask.from_indices(net, 1, [0]))
        np.testing.assert_allclose(only_node_0[:, 0], full[:, 0] - contributions[1], atol=1e-10)

    def test_additivity_over_disjoint_coalitions(self, rng):
        net = random_net([2, 6, 1], seed=7)
        x = rng.uniform(-1, 1, (40, 2))
        a = CoalitionMask.from_indices(net, 1, [0, 2])
        b = CoalitionMask.from_indices(net, 1, [3, 5])
        ab = CoalitionMask.from_indices(net, 1, [0, 2, 3, 5])
        lhs = forward_masked(net, x, ab)
        rhs = forward_masked(net, x, a) + forward_masked(net, x, b)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_mask_validation(self, grid33):
        net = zero_net([2, 3, 2, 1], grid33)
        with pytest.raises(ValueError):
            forward_masked(net, np.zeros((1, 2)), CoalitionMask(0, np.ones(2, dtype=bool)))
        with pytest.raises(ValueError):
            forward_masked(net, np.zeros((1, 2)), CoalitionMask(3, np.ones(1, dtype=bool)))
        with pytest.raises(ValueError):
            forward_masked(net, np.zeros((1, 2)), CoalitionMask(1, np.ones(4, dtype=bool)))


class TestForwardFrom:
    def test_full_mask_bitwise_equals_forward_tail(self, rng):
        net = random_net([2, 4, 3, 1], seed=8)
        x = rng.uniform(-1, 1, (20, 2))
        out, cache = forward(net, x)
        resumed = forward_from(net, 1, cache.node_values[1], CoalitionMask.full(net, 1))
        np.testing.assert_array_equal(resumed, out)

    def test_equals_forward_masked_on_random_masks(self, rng):
        for seed in (1, 2, 3):
            net = random_net([2, 5, 3, 1], seed=seed)
            x = rng.uniform(-1, 1, (15, 2))
            _, cache = forward(net, x)
            for layer_index in (1, 2):
                for _ in range(9):
                    included = rng.random(net.widths[layer_index]) < 0.5
                    mask = CoalitionMask(layer_index, included)
                    a = forward_masked(net, x, mask)
                    b = forward_from(net, layer_index, cache.node_values[layer_index], mask)
                    np.testing.assert_allclose(a, b, atol=1e-12)

    def test_empty_mask_at_last_hidden_layer(self, rng):
        net = random_net([2, 3, 4, 1], seed=9)
        x = rng.uniform(-1, 1, (12, 2))
        _, cache = forward(net, x)
        out = forward_from(net, 2, cache.node_values[2], CoalitionMask.empty(net, 2))
        np.testing.assert_array_equal(out, np.zeros((12, 1)))

    def test_stale_cache_rejected(self, rng):
        net = random_net([2, 3, 1], seed=10)
        with pytest.raises(ValueError):
            forward_from(net, 1, np.zeros((4, 2)), CoalitionMask.full(net, 1))


class TestMagnitudes:
    def test_zero_edge_zero_magnitude(self, grid33, rng):
        net = zero_net([2, 2, 1], grid33)
        _, cache = forward(net, rng.uniform(-1, 1, (10, 2)))
        mags = node_l1_magnitudes(cache, net)
        assert all(np.all(m == 0) for m in mags)

    def test_silu_edge_magnitude(self, grid33):
        net = zero_net([1, 1], grid33)
        net.layers[0].base_weight[:] = 1.0
        x = np.array([[-1.0], [1.0]])
        _, cache = forward(net, x)
        mags = node_l1_magnitudes(cache, net)
        expected = np.mean(np.abs(silu(np.array([-1.0, 1.0]))))
        np.testing.assert_allclose(mags[0][0, 0], expected, atol=1e-14)

    def test_deterministic(self, rng):
        net = random_net([2, 3, 1], seed=13)
        _, cache = forward(net, rng.uniform(-1, 1, (10, 2)))
        a = node_l1_magnitudes(cache, net)
        b = node_l1_magnitudes(cache, net)
        for m1, m2 in zip(a, b):
            np.testing.assert_array_equal(m1, m2)

    def test_empty_cache_rejected(self, grid33):
        net = zero_net([2, 2, 1], grid33)
        from shapkan.network import ActivationCache

        with pytest.raises(ValueError):
            node_l1_magnitudes(ActivationCache([np.zeros((0, 2))]), net)


class TestSerialization:
    def test_round_trip_value_exact(self, tmp_path, rng):
        net = random_net([2, 4, 2], seed=14)
        net.layers[0].coef[0, 0, 0] = np.pi
        net.layers[0].coef[0, 0, 1] = 1e-300
        net.layers[1].base_weight[0, 0] = -2.5e17
        path = tmp_path / "model.json"
        save_model(net, path)
        loaded = load_model(path)
        assert loaded.widths == net.widths
        for a, b in zip(net.layers, loaded.layers):
            np.testing.assert_array_equal(a.base_weight, b.base_weight)
            np.testing.assert_array_equal(a.spline_weight, b.spline_weight)
            np.testing.assert_array_equal(a.coef, b.coef)
        out_a, _ = forward(net, rng.uniform(-1, 1, (5, 2)))

    def test_grid_settings_preserved(self, tmp_path):
        grid = make_grid(2, 4, -2.0, 2.0)
        net = init_network([3, 2, 1], grid, seed=1)
        save_model(net, tmp_path / "m.json")
        loaded = load_model(tmp_path / "m.json")
        assert loaded.grid.degree == 2
        assert loaded.grid.num_intervals == 4
        assert loaded.grid.domain_lo == -2.0

    def test_unknown_version_rejected(self, tmp_path):
        doc = to_dict(init_network([2, 2, 1], make_grid(3, 3, -1, 1), seed=0))
        doc["format_version"] = 99
        with pytest.raises(ValueError):
            from_dict(doc)

    def test_copy_is_deep(self):
        net = init_network([2, 2, 1], make_grid(3, 3, -1, 1), seed=0)
        dup = net.copy()
        dup.layers[0].coef[:] = 123.0
        assert net.layers[0].coef.max() < 1.0
