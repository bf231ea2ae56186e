"""KAN model core: layers of learnable edge activations.

A network is a stack of layers; layer ``l`` maps ``widths[l]`` node values to
``widths[l+1]`` node values, each output node being the plain sum of the
incoming edge activations phi(x) = w_b * silu(x) + w_s * sum_m c_m B_m(x).
Coalition-masked forward passes drop excluded nodes' post-activations from
those sums, which is the operation node attribution is built on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .splines import SplineGrid, design_matrix, make_grid

MODEL_FORMAT_VERSION = 1


def silu(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):  # exp overflow saturates correctly
        return x / (1.0 + np.exp(-x))


def silu_prime(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


@dataclass
class KanLayer:
    """All edges from one node layer to the next.

    ``base_weight`` and ``spline_weight`` are (n_out, n_in); ``coef`` is
    (n_out, n_in, num_basis). Edge (j, i) runs from input node i to output
    node j.
    """

    n_in: int
    n_out: int
    grid: SplineGrid
    base_weight: np.ndarray
    spline_weight: np.ndarray
    coef: np.ndarray

    def __post_init__(self):
        if self.base_weight.shape != (self.n_out, self.n_in):
            raise ValueError("base_weight shape mismatch")
        if self.spline_weight.shape != (self.n_out, self.n_in):
            raise ValueError("spline_weight shape mismatch")
        if self.coef.shape != (self.n_out, self.n_in, self.grid.num_basis):
            raise ValueError("coef shape mismatch")

    def copy(self) -> "KanLayer":
        return KanLayer(
            self.n_in,
            self.n_out,
            self.grid,
            self.base_weight.copy(),
            self.spline_weight.copy(),
            self.coef.copy(),
        )


@dataclass
class KanNetwork:
    widths: list[int]
    layers: list[KanLayer]

    def __post_init__(self):
        if len(self.widths) != len(self.layers) + 1:
            raise ValueError("widths/layers length mismatch")
        for l, layer in enumerate(self.layers):
            if layer.n_in != self.widths[l] or layer.n_out != self.widths[l + 1]:
                raise ValueError(f"layer {l} shape does not match widths")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def grid(self) -> SplineGrid:
        return self.layers[0].grid

    def copy(self) -> "KanNetwork":
        return KanNetwork(list(self.widths), [layer.copy() for layer in self.layers])

    def parameter_count(self) -> int:
        return sum(
            layer.base_weight.size + layer.spline_weight.size + layer.coef.size
            for layer in self.layers
        )

    def hidden_layers(self) -> range:
        """Indices of node layers eligible for masking/pruning (never layer 0)."""
        return range(1, len(self.widths) - 1)


@dataclass(frozen=True)
class CoalitionMask:
    """Subset of one hidden node layer whose post-activations are kept."""

    layer_index: int
    included: np.ndarray

    @staticmethod
    def full(net: KanNetwork, layer_index: int) -> "CoalitionMask":
        return CoalitionMask(layer_index, np.ones(net.widths[layer_index], dtype=bool))

    @staticmethod
    def empty(net: KanNetwork, layer_index: int) -> "CoalitionMask":
        return CoalitionMask(layer_index, np.zeros(net.widths[layer_index], dtype=bool))

    @staticmethod
    def from_indices(net: KanNetwork, layer_index: int, indices) -> "CoalitionMask":
        included = np.zeros(net.widths[layer_index], dtype=bool)
        included[list(indices)] = True
        return CoalitionMask(layer_index, included)


def _check_mask(net: KanNetwork, mask: CoalitionMask) -> None:
    if not 1 <= mask.layer_index <= len(net.widths) - 2:
        raise ValueError(
            f"mask layer {mask.layer_index} is not a hidden layer of widths {net.widths}"
        )
    if mask.included.shape != (net.widths[mask.layer_index],):
        raise ValueError("mask length does not match layer width")


@dataclass
class ActivationCache:
    """Node values per layer for one dataset, ``node_values[l]`` is (N, widths[l])."""

    node_values: list[np.ndarray]

    @property
    def n_samples(self) -> int:
        return self.node_values[0].shape[0]


def spline_contract(basis: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """sum_m basis[n,i,m] * coef[j,i,m] as a batched matmul over i -> (N, n_out, n_in)."""
    return np.matmul(basis.transpose(1, 0, 2), coef.transpose(1, 2, 0)).transpose(1, 2, 0)


def layer_post_activations(layer: KanLayer, x: np.ndarray, basis: np.ndarray | None = None) -> np.ndarray:
    """Per-edge activations phi(x_i), shape (N, n_out, n_in).

    ``basis`` may pass precomputed basis values for ``x`` (N, n_in, num_basis).
    """
    if basis is None:
        flat = design_matrix(layer.grid, np.ravel(x))
        basis = flat.reshape(x.shape[0], layer.n_in, layer.grid.num_basis)
    spline = spline_contract(basis, layer.coef)
    return (
        layer.base_weight[None, :, :] * silu(x)[:, None, :]
        + layer.spline_weight[None, :, :] * spline
    )


def _layer_forward(layer: KanLayer, x: np.ndarray, keep: np.ndarray | None = None) -> np.ndarray:
    post = layer_post_activations(layer, x)
    if keep is None:
        return post.sum(axis=2)
    if not keep.any():
        return np.zeros((x.shape[0], layer.n_out))
    return post[:, :, keep].sum(axis=2)


def forward(net: KanNetwork, inputs: np.ndarray) -> tuple[np.ndarray, ActivationCache]:
    """Full forward pass; returns outputs (N, n_L) and all node values."""
    x = _check_inputs(net, inputs)
    nodes = [x]
    for layer in net.layers:
        x = _layer_forward(layer, x)
        nodes.append(x)
    return x, ActivationCache(nodes)


def forward_masked(net: KanNetwork, inputs: np.ndarray, mask: CoalitionMask) -> np.ndarray:
    """Forward pass with excluded nodes' post-activations dropped from the
    sums into layer ``mask.layer_index + 1``; all other layers are unchanged.
    """
    _check_mask(net, mask)
    x = _check_inputs(net, inputs)
    for l, layer in enumerate(net.layers):
        keep = mask.included if l == mask.layer_index else None
        x = _layer_forward(layer, x, keep)
    return x


def forward_from(
    net: KanNetwork,
    layer_index: int,
    layer_inputs: np.ndarray,
    mask: CoalitionMask,
) -> np.ndarray:
    """Resume a masked forward pass from cached node values at ``layer_index``.

    Masking layer l only affects layers >= l, so upstream activations cached
    by :func:`forward` can be reused across many coalition evaluations.
    """
    _check_mask(net, mask)
    if mask.layer_index < layer_index:
        raise ValueError("mask addresses a layer upstream of the cached values")
    x = np.asarray(layer_inputs, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.widths[layer_index]:
        raise ValueError(
            f"cached values have shape {x.shape}, expected (N, {net.widths[layer_index]})"
        )
    for l in range(layer_index, net.n_layers):
        keep = mask.included if l == mask.layer_index else None
        x = _layer_forward(net.layers[l], x, keep)
    return x


def node_l1_magnitudes(cache: ActivationCache, net: KanNetwork) -> list[np.ndarray]:
    """Dataset-mean absolute post-activation per edge, one (n_out, n_in) array
    per layer. This is the magnitude the sparsity penalty and the vanilla
    pruning scores are built from.
    """
    if not cache.node_values or cache.n_samples == 0:
        raise ValueError("empty activation cache")
    mags = []
    for l, layer in enumerate(net.layers):
        post = layer_post_activations(layer, cache.node_values[l])
        mags.append(np.abs(post).mean(axis=0))
    return mags


def _check_inputs(net: KanNetwork, inputs: np.ndarray) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.widths[0]:
        raise ValueError(f"inputs have shape {x.shape}, expected (N, {net.widths[0]})")
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs contain non-finite values")
    return x


def to_dict(net: KanNetwork) -> dict:
    grid = net.grid
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "widths": list(net.widths),
        "degree": grid.degree,
        "grid_intervals": grid.num_intervals,
        "domain": [grid.domain_lo, grid.domain_hi],
        "layers": [
            {
                "base_weight": layer.base_weight.tolist(),
                "spline_weight": layer.spline_weight.tolist(),
                "coefficients": layer.coef.tolist(),
            }
            for layer in net.layers
        ],
    }


def from_dict(doc: dict) -> KanNetwork:
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version: {version!r}")
    widths = [int(w) for w in doc["widths"]]
    grid = make_grid(int(doc["degree"]), int(doc["grid_intervals"]), *map(float, doc["domain"]))
    layers = []
    for l, layer_doc in enumerate(doc["layers"]):
        layers.append(
            KanLayer(
                widths[l],
                widths[l + 1],
                grid,
                np.asarray(layer_doc["base_weight"], dtype=float),
                np.asarray(layer_doc["spline_weight"], dtype=float),
                np.asarray(layer_doc["coefficients"], dtype=float),
            )
        )
    return KanNetwork(widths, layers)


def save_model(net: KanNetwork, path) -> None:
    Path(path).write_text(json.dumps(to_dict(net)) + "\n")


def load_model(path) -> KanNetwork:
    return from_dict(json.loads(Path(path).read_text()))
