"""Node importance for a hidden layer via the prediction game.

The value of a coalition of nodes is the dataset mean of the model output
when only those nodes' post-activations feed the next layer. Shapley values
of that game are computed exactly (all coalitions, binomial weights) or
estimated by permutation sampling, optionally with antithetic pairing
(each sampled ordering swept together with its reversal) and an adaptive
stopping rule. The magnitude-based incoming/outgoing scores used by the
stock pruning rule are provided as the baseline.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import (
    ActivationCache,
    CoalitionMask,
    KanNetwork,
    _layer_forward,
    forward,
    forward_from,
    layer_post_activations,
    node_l1_magnitudes,
)
from .rng import make_rng

EXACT_WIDTH_CAP = 20

METHOD_EXACT = "exact"
METHOD_PERMUTATION = "permutation"
METHOD_ANTITHETIC = "antithetic"
METHOD_VANILLA_IN = "vanilla_in"
METHOD_VANILLA_OUT = "vanilla_out"


@dataclass
class AttributionReport:
    """Per-node importance estimates for one hidden layer.

    ``normalized_share`` is |score| over the layer's total |score| and sums
    to 1 whenever the total is positive; ``std_error`` is 0 for exact and
    magnitude methods.
    """

    layer_index: int
    shapley: np.ndarray
    std_error: np.ndarray
    method: str
    permutations_used: int
    normalized_share: np.ndarray = field(default=None)

    def __post_init__(self):
        self.shapley = np.asarray(self.shapley, dtype=float)
        self.std_error = np.asarray(self.std_error, dtype=float)
        if self.normalized_share is None:
            self.normalized_share = normalized_shares(self.shapley)

    def ranking(self) -> np.ndarray:
        """Node indices from most to least important by |score|."""
        return np.argsort(-np.abs(self.shapley), kind="stable")

    def to_dict(self) -> dict:
        ranks = np.empty(len(self.shapley), dtype=int)
        ranks[self.ranking()] = np.arange(1, len(self.shapley) + 1)
        return {
            "layer_index": self.layer_index,
            "method": self.method,
            "permutations_used": self.permutations_used,
            "shapley": self.shapley.tolist(),
            "std_error": self.std_error.tolist(),
            "normalized_share": self.normalized_share.tolist(),
            "rank": ranks.tolist(),
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_csv(self, path) -> None:
        doc = self.to_dict()
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["node", "sv", "std_error", "share", "rank"])
            for i in range(len(self.shapley)):
                writer.writerow(
                    [i, f"{doc['shapley'][i]:.17g}", f"{doc['std_error'][i]:.17g}",
                     f"{doc['normalized_share'][i]:.17g}", doc["rank"][i]]
                )


def normalized_shares(scores: np.ndarray) -> np.ndarray:
    total = np.abs(scores).sum()
    if total > 0:
        return np.abs(scores) / total
    return np.zeros_like(scores, dtype=float)


class PredictionGame:
    """Coalition value function v(S) = mean model output with only the nodes
    in S feeding layer ``layer_index + 1``.

    The pass up to the scored layer and that layer's per-edge activations are
    computed once; each coalition evaluation then only sums the selected
    activations and runs the remaining layers.
    """

    def __init__(self, net: KanNetwork, inputs, layer_index: int):
        if not 1 <= layer_index <= len(net.widths) - 2:
            raise ValueError(f"layer {layer_index} is not a hidden layer of widths {net.widths}")
        inputs = np.asarray(inputs, dtype=float)
        if inputs.size == 0:
            raise ValueError("empty dataset")
        self.net = net
        self.layer_index = layer_index
        self.n_players = net.widths[layer_index]
        _, cache = forward(net, inputs)
        self.layer_inputs = cache.node_values[layer_index]
        # post-activations of the masked transition, (N, widths[l+1], n_players)
        self._post = layer_post_activations(net.layers[layer_index], self.layer_inputs)
        self._tail_layers = net.layers[layer_index + 1 :]

    def _tail(self, x: np.ndarray) -> np.ndarray:
        for layer in self._tail_layers:
            x = _layer_forward(layer, x)
        return x

    def value(self, included: np.ndarray) -> float:
        """v(S) for one coalition given as a boolean vector."""
        included = np.asarray(included, dtype=bool)
        if included.any():
            nxt = self._post[:, :, included].sum(axis=2)
        else:
            nxt = np.zeros(self._post.shape[:2])
        return float(np.mean(self._tail(nxt)))

    def values(self, masks: np.ndarray) -> np.ndarray:
        """v(S) for a batch of coalitions, masks shaped (K, n_players)."""
        masks = np.asarray(masks, dtype=float)
        k, n = masks.shape
        samples = self._post.shape[0]
        nxt = np.einsum("nji,ki->knj", self._post, masks, optimize=True)
        out = self._tail(nxt.reshape(k * samples, -1))
        return out.reshape(k, samples, -1).mean(axis=(1, 2))


def value(net: KanNetwork, inputs, mask: CoalitionMask) -> float:
    """Coalition value evaluated through the cached-upstream fast path."""
    game = PredictionGame(net, inputs, mask.layer_index)
    return game.value(mask.included)


def value_slow(net: KanNetwork, inputs, mask: CoalitionMask) -> float:
    """Unoptimized reference: full masked forward, no reuse."""
    _, cache = forward(net, np.asarray(inputs, dtype=float))
    out = forward_from(net, mask.layer_index, cache.node_values[mask.layer_index], mask)
    return float(np.mean(out))


def _subset_masks(n: int) -> np.ndarray:
    """All 2^n coalitions as boolean rows; row index is the bitmask."""
    codes = np.arange(2**n, dtype=np.uint32)
    return (codes[:, None] >> np.arange(n, dtype=np.uint32)[None, :]) & 1 == 1


def exact_shapley(net: KanNetwork, inputs, layer_index: int) -> AttributionReport:
    """Exact Shapley values: every coalition evaluated once, combined with
    the subset-size weights 1 / (n * C(n-1, |S|)).
    """
    game = PredictionGame(net, inputs, layer_index)
    n = game.n_players
    if n > EXACT_WIDTH_CAP:
        raise ValueError(f"layer width {n} exceeds exact cap {EXACT_WIDTH_CAP}")
    masks = _subset_masks(n)
    values = np.empty(2**n)
    chunk = max(1, 2**22 // max(1, game._post.shape[0] * game._post.shape[1]))
    for lo in range(0, len(masks), chunk):
        values[lo : lo + chunk] = game.values(masks[lo : lo + chunk])

    sizes = masks.sum(axis=1)
    weights = np.array([1.0 / (n * math.comb(n - 1, s)) for s in range(n)])
    shap = np.empty(n)
    codes = np.arange(2**n, dtype=np.uint32)
    for i in range(n):
        without = codes[(codes >> i) & 1 == 0]
        gains = values[without | (1 << i)] - values[without]
        shap[i] = float(np.sum(weights[sizes[without]] * gains))
    return AttributionReport(layer_index, shap, np.zeros(n), METHOD_EXACT, 0)


def _sweep(game: PredictionGame, order: np.ndarray, v_empty: float, v_full: float) -> np.ndarray:
    """Marginal contribution of every node along one ordering.

    All prefixes of the ordering are evaluated in one batch.
    """
    n = game.n_players
    vals = np.empty(n + 1)
    vals[0] = v_empty
    vals[n] = v_full
    if n > 1:
        prefixes = np.zeros((n - 1, n), dtype=bool)
        for t in range(n - 1):
            prefixes[t:, order[t]] = True
        vals[1:n] = game.values(prefixes)
    marginals = np.empty(n)
    marginals[order] = np.diff(vals)
    return marginals


def permutation_shapley(
    net: KanNetwork, inputs, layer_index: int, m: int, seed: int = 0
) -> AttributionReport:
    """Monte Carlo estimate averaging marginal contributions over m uniformly
    sampled orderings of the layer's nodes.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    game = PredictionGame(net, inputs, layer_index)
    rng = make_rng(seed)
    n = game.n_players
    v_empty = game.value(np.zeros(n, dtype=bool))
    v_full = game.value(np.ones(n, dtype=bool))
    marginals = np.empty((m, n))
    for t in range(m):
        marginals[t] = _sweep(game, rng.permutation(n), v_empty, v_full)
    return AttributionReport(
        layer_index,
        marginals.mean(axis=0),
        _std_error(marginals),
        METHOD_PERMUTATION,
        m,
    )


def antithetic_shapley(
    net: KanNetwork, inputs, layer_index: int, m: int, seed: int = 0
) -> AttributionReport:
    """Permutation sampling with each ordering paired with its reversal; the
    estimate averages the per-pair mean marginals, which keeps the estimator
    unbiased while cancelling much of the sweep-order noise.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    game = PredictionGame(net, inputs, layer_index)
    rng = make_rng(seed)
    pair_means = _antithetic_batch(game, rng, m)
    return AttributionReport(
        layer_index,
        pair_means.mean(axis=0),
        _std_error(pair_means),
        METHOD_ANTITHETIC,
        m,
    )


def _antithetic_batch(game: PredictionGame, rng: np.random.Generator, m: int) -> np.ndarray:
    n = game.n_players
    v_empty = game.value(np.zeros(n, dtype=bool))
    v_full = game.value(np.ones(n, dtype=bool))
    pair_means = np.empty((m, n))
    for t in range(m):
        order = rng.permutation(n)
        fwd = _sweep(game, order, v_empty, v_full)
        rev = _sweep(game, order[::-1], v_empty, v_full)
        pair_means[t] = 0.5 * (fwd + rev)
    return pair_means


def adaptive_shapley(
    net: KanNetwork,
    inputs,
    layer_index: int,
    epsilon: float = 1e-3,
    m_max: int = 1024,
    seed: int = 0,
    window: int = 32,
) -> AttributionReport:
    """Antithetic sampling in fixed windows with an early stop.

    After each window (from the second on) the running means are compared
    with the previous window's; sampling stops when the largest per-node
    change falls below ``epsilon`` relative to the running max magnitude,
    or when ``m_max`` permutations have been used.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if m_max < window:
        raise ValueError(f"m_max must be >= window ({window})")
    game = PredictionGame(net, inputs, layer_index)
    rng = make_rng(seed)
    n = game.n_players
    all_pairs = []
    used = 0
    prev_mean = None
    while used < m_max:
        take = min(window, m_max - used)
        all_pairs.append(_antithetic_batch(game, rng, take))
        used += take
        mean = np.concatenate(all_pairs).mean(axis=0)
        if prev_mean is not None:
            change = np.abs(mean - prev_mean).max()
            if change < epsilon * (np.abs(mean).max() + 1e-12):
                break
        prev_mean = mean
    pair_means = np.concatenate(all_pairs)
    return AttributionReport(
        layer_index,
        pair_means.mean(axis=0),
        _std_error(pair_means),
        METHOD_ANTITHETIC,
        used,
    )


def _std_error(samples: np.ndarray) -> np.ndarray:
    m = samples.shape[0]
    if m < 2:
        return np.zeros(samples.shape[1])
    return samples.std(axis=0, ddof=1) / math.sqrt(m)


def vanilla_scores(
    net: KanNetwork, cache: ActivationCache
) -> dict[int, tuple[AttributionReport, AttributionReport]]:
    """Magnitude-based incoming/outgoing scores per hidden layer.

    A node's incoming score is the max dataset-mean |activation| over edges
    feeding it, the outgoing score the max over edges leaving it. Both are
    computed from the cached activations, so they inherit that dataset's
    input distribution.
    """
    mags = node_l1_magnitudes(cache, net)
    reports = {}
    for l in net.hidden_layers():
        incoming = mags[l - 1].max(axis=1)  # over edges into each node of layer l
        outgoing = mags[l].max(axis=0)  # over edges out of each node of layer l
        reports[l] = (
            AttributionReport(l, incoming, np.zeros_like(incoming), METHOD_VANILLA_IN, 0),
            AttributionReport(l, outgoing, np.zeros_like(outgoing), METHOD_VANILLA_OUT, 0),
        )
    return reports
