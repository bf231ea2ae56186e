"""Node selection and structural removal across hidden layers.

Selection supports three criteria (ratio of total importance, fixed count,
absolute threshold). Removal is exact surgery: edges into and out of the
removed nodes are deleted and every surviving edge keeps its parameters
bit for bit, so the pruned model's forward pass equals the coalition-masked
original. The multi-layer driver scores and prunes hidden layers bottom-up
on a working copy, switching from exact Shapley values to adaptive sampling
once a layer is too wide to enumerate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attribution import (
    AttributionReport,
    adaptive_shapley,
    exact_shapley,
    vanilla_scores,
)
from .network import KanLayer, KanNetwork, forward

EXACT_DISPATCH_WIDTH = 8  # below this, a layer is scored exhaustively
DEFAULT_VANILLA_THETA = 1e-2


@dataclass
class PruneCriterion:
    """How to pick nodes for removal from one report.

    ratio: drop nodes whose share of total |score| is below ``value``;
    number: drop the ``value`` smallest-|score| nodes;
    threshold: drop nodes with |score| below ``value`` (``per_layer`` may
    override the threshold for specific layers).
    """

    kind: str
    value: float
    per_layer: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("ratio", "number", "threshold"):
            raise ValueError(f"unknown criterion kind: {self.kind!r}")
        if self.kind == "ratio" and not 0 <= self.value < 1:
            raise ValueError("ratio must be in [0, 1)")
        if self.kind == "number" and (self.value < 0 or self.value != int(self.value)):
            raise ValueError("number must be a nonnegative integer")
        if self.kind == "threshold" and self.value < 0:
            raise ValueError("threshold must be >= 0")

    @staticmethod
    def ratio(eta: float) -> "PruneCriterion":
        return PruneCriterion("ratio", eta)

    @staticmethod
    def number(k: int) -> "PruneCriterion":
        return PruneCriterion("number", k)

    @staticmethod
    def threshold(tau: float, per_layer: dict[int, float] | None = None) -> "PruneCriterion":
        return PruneCriterion("threshold", tau, per_layer or {})

    def threshold_for(self, layer_index: int) -> float:
        return self.per_layer.get(layer_index, self.value)


@dataclass
class PrunePlanEntry:
    layer_index: int
    removed: list[int]
    reports: list[AttributionReport]


@dataclass
class PrunePlan:
    entries: list[PrunePlanEntry]

    def to_dict(self) -> dict:
        return {
            "layers": [
                {
                    "layer_index": e.layer_index,
                    "removed": list(e.removed),
                    "reports": [r.to_dict() for r in e.reports],
                }
                for e in self.entries
            ]
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass
class SamplingConfig:
    """Settings for layers scored by sampling instead of enumeration."""

    epsilon: float = 1e-3
    m_max: int = 1024
    seed: int = 0
    exact_width: int = EXACT_DISPATCH_WIDTH


def select_nodes(report: AttributionReport, criterion: PruneCriterion) -> list[int]:
    """Node indices to remove under the criterion, never the whole layer.

    Candidates are taken in ascending (|score|, index) order, so ties remove
    lower indices first; the final node in that order (a largest-|score|
    node) is always retained.
    """
    scores = np.abs(report.shapley)
    n = len(scores)
    if n == 0:
        raise ValueError("empty report")
    order = np.lexsort((np.arange(n), scores))  # ascending score, then index

    if criterion.kind == "number":
        k = int(criterion.value)
        if k >= n:
            raise ValueError(f"cannot remove {k} of {n} nodes")
        chosen = order[:k]
    elif criterion.kind == "ratio":
        shares = report.normalized_share
        chosen = [i for i in order if shares[i] < criterion.value]
    else:
        tau = criterion.threshold_for(report.layer_index)
        chosen = [i for i in order if scores[i] < tau]
    chosen = list(chosen)[: n - 1]  # keep at least the top node
    return sorted(int(i) for i in chosen)


def prune_layer(net: KanNetwork, layer_index: int, remove) -> KanNetwork:
    """New network with the given nodes of a hidden layer removed.

    Surviving edge parameters are copied untouched; the result's forward
    pass equals the complement-masked original.
    """
    if not 1 <= layer_index <= len(net.widths) - 2:
        raise ValueError(f"layer {layer_index} is not a hidden layer of widths {net.widths}")
    remove = sorted(set(int(i) for i in remove))
    width = net.widths[layer_index]
    if any(i < 0 or i >= width for i in remove):
        raise ValueError(f"node indices {remove} out of range for width {width}")
    if len(remove) >= width:
        raise ValueError("refusing to remove every node of a layer")
    keep = np.array([i for i in range(width) if i not in remove], dtype=int)

    widths = list(net.widths)
    widths[layer_index] = len(keep)
    layers = []
    for l, layer in enumerate(net.layers):
        if l == layer_index - 1:  # edges into the pruned layer
            layers.append(
                KanLayer(layer.n_in, len(keep), layer.grid,
                         layer.base_weight[keep].copy(),
                         layer.spline_weight[keep].copy(),
                         layer.coef[keep].copy())
            )
        elif l == layer_index:  # edges out of the pruned layer
            layers.append(
                KanLayer(len(keep), layer.n_out, layer.grid,
                         layer.base_weight[:, keep].copy(),
                         layer.spline_weight[:, keep].copy(),
                         layer.coef[:, keep].copy())
            )
        else:
            layers.append(layer.copy())
    return KanNetwork(widths, layers)


def shapkan_prune(
    net: KanNetwork,
    inputs,
    criterion: PruneCriterion,
    sampling: SamplingConfig | None = None,
) -> tuple[KanNetwork, PrunePlan]:
    """Shapley-guided multi-layer pruning, bottom-up on a working copy.

    Each hidden layer is scored on the current (already partially pruned)
    model: exactly while the layer is narrower than the dispatch width,
    otherwise with adaptive antithetic sampling.
    """
    sampling = sampling or SamplingConfig()
    work = net.copy()
    entries = []
    for l in work.hidden_layers():
        if work.widths[l] < sampling.exact_width:
            report = exact_shapley(work, inputs, l)
        else:
            report = adaptive_shapley(
                work, inputs, l,
                epsilon=sampling.epsilon, m_max=sampling.m_max, seed=sampling.seed,
            )
        removed = select_nodes(report, criterion)
        if removed:
            work = prune_layer(work, l, removed)
        entries.append(PrunePlanEntry(l, removed, [report]))
    return work, PrunePlan(entries)


def vanilla_prune(
    net: KanNetwork, inputs, criterion: PruneCriterion
) -> tuple[KanNetwork, PrunePlan]:
    """Magnitude-baseline pruning with the same surgery and layer order.

    A node survives a threshold criterion only if both its incoming and
    outgoing scores exceed the threshold; for ratio/number criteria the
    node's score is min(incoming, outgoing) so prune counts stay comparable
    with the Shapley-guided path.
    """
    work = net.copy()
    entries = []
    for l in work.hidden_layers():
        _, cache = forward(work, np.asarray(inputs, dtype=float))
        rep_in, rep_out = vanilla_scores(work, cache)[l]
        combined = AttributionReport(
            l,
            np.minimum(rep_in.shapley, rep_out.shapley),
            np.zeros_like(rep_in.shapley),
            "vanilla_min",  # internal only, the plan stores the in/out pair
            0,
        )
        if criterion.kind == "threshold":
            tau = criterion.threshold_for(l)
            # retained only when both scores exceed the threshold
            order = np.argsort(np.abs(combined.shapley), kind="stable")
            removed = [int(i) for i in order if combined.shapley[i] <= tau]
            removed = sorted(removed[: len(combined.shapley) - 1])
        else:
            removed = select_nodes(combined, criterion)
        if removed:
            work = prune_layer(work, l, removed)
        entries.append(PrunePlanEntry(l, removed, [rep_in, rep_out]))
    return work, PrunePlan(entries)
