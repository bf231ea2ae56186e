"""Gradient-based fitting of a network to data.

The objective is mean squared error plus an optional sparsity penalty:
``lamb * (mu1 * L1 + mu2 * entropy)`` where L1 sums every edge's dataset-mean
absolute activation and the entropy term penalizes spread-out edge-magnitude
distributions within each layer. Gradients are exact (including the penalty's
dependence on upstream parameters) and the optimizer is bias-corrected Adam,
so a run is fully determined by its seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import KanNetwork, KanLayer, silu, silu_prime, spline_contract
from .splines import SplineGrid, design_and_derivative, design_matrix
from .rng import make_rng


class DivergenceError(RuntimeError):
    """Raised when training produces non-finite losses or parameters."""


@dataclass
class TrainConfig:
    steps: int = 2000
    learning_rate: float = 0.01
    lamb: float = 0.0
    mu1: float = 1.0
    mu2: float = 1.0
    batch_size: int | None = None
    seed: int = 0
    keep_best: bool = False

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.lamb < 0:
            raise ValueError("lamb must be >= 0")


@dataclass
class LossBreakdown:
    pred_loss: float
    l1_term: float
    entropy_term: float
    total: float


@dataclass
class LayerGrads:
    base_weight: np.ndarray
    spline_weight: np.ndarray
    coef: np.ndarray


def init_network(widths, grid: SplineGrid, seed: int = 0) -> KanNetwork:
    """Fresh network: unit base/spline weights, spline coefficients drawn from
    a zero-mean normal with scale 0.1 / sqrt(num_basis)."""
    widths = [int(w) for w in widths]
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ValueError(f"widths must list >= 2 positive node counts, got {widths}")
    rng = make_rng(seed)
    scale = 0.1 / np.sqrt(grid.num_basis)
    layers = []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        layers.append(
            KanLayer(
                n_in,
                n_out,
                grid,
                base_weight=np.ones((n_out, n_in)),
                spline_weight=np.ones((n_out, n_in)),
                coef=rng.normal(0.0, scale, size=(n_out, n_in, grid.num_basis)),
            )
        )
    return KanNetwork(widths, layers)


def _check_xy(net: KanNetwork, inputs, targets) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if x.ndim != 2 or x.shape[1] != net.widths[0]:
        raise ValueError(f"inputs have shape {x.shape}, expected (N, {net.widths[0]})")
    if y.shape != (x.shape[0], net.widths[-1]):
        raise ValueError(f"targets have shape {y.shape}, expected ({x.shape[0]}, {net.widths[-1]})")
    return x, y


def _basis_tensor(grid, x, with_derivs):
    n, width = x.shape
    if with_derivs:
        vals, ders = design_and_derivative(grid, x.ravel())
        return (
            vals.reshape(n, width, grid.num_basis),
            ders.reshape(n, width, grid.num_basis),
        )
    vals = design_matrix(grid, x.ravel())
    return vals.reshape(n, width, grid.num_basis), None


def _loss_and_grads(
    net: KanNetwork,
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    want_grads: bool,
    basis0: np.ndarray | None = None,
) -> tuple[LossBreakdown, list[LayerGrads] | None]:
    n = x.shape[0]
    lam, mu1, mu2 = config.lamb, config.mu1, config.mu2

    # Forward, keeping per-layer intermediates for the backward sweep.
    nodes = [x]
    basis, basis_d, silus, silu_ds, spline_sums, posts = [], [], [], [], [], []
    cur = x
    for l, layer in enumerate(net.layers):
        need_d = want_grads and l > 0
        if l == 0 and basis0 is not None:
            b, bd = basis0, None
        else:
            b, bd = _basis_tensor(layer.grid, cur, need_d)
        s = silu(cur)
        spline = spline_contract(b, layer.coef)
        post = layer.base_weight[None] * s[:, None, :] + layer.spline_weight[None] * spline
        basis.append(b)
        basis_d.append(bd)
        silus.append(s)
        silu_ds.append(silu_prime(cur) if need_d else None)
        spline_sums.append(spline)
        posts.append(post)
        cur = post.sum(axis=2)
        nodes.append(cur)

    resid = cur - y
    with np.errstate(over="ignore"):  # diverging runs are caught by the caller
        pred_loss = float(np.mean(resid**2))

    mags = [np.abs(p).mean(axis=0) for p in posts]
    l1_term = float(sum(m.sum() for m in mags))
    entropies, probs = [], []
    for m in mags:
        total = m.sum()
        if total > 0:
            p = m / total
            with np.errstate(divide="ignore", invalid="ignore"):
                plogp = np.where(p > 0, p * np.log(p), 0.0)
            entropies.append(-plogp.sum())
        else:
            p = np.zeros_like(m)
            entropies.append(0.0)
        probs.append(p)
    entropy_term = float(sum(entropies))
    total = pred_loss + lam * (mu1 * l1_term + mu2 * entropy_term)
    breakdown = LossBreakdown(pred_loss, l1_term, entropy_term, total)
    if not want_grads:
        return breakdown, None

    # Backward. G is dTotal/d(nodes[l+1]); the penalty injects an extra
    # gradient directly on each layer's post-activation tensor.
    grads: list[LayerGrads | None] = [None] * net.n_layers
    out_dim = y.shape[1]
    g = 2.0 * resid / (n * out_dim)
    for l in range(net.n_layers - 1, -1, -1):
        layer = net.layers[l]
        t = g[:, :, None] * np.ones((1, 1, layer.n_in))
        if lam > 0:
            m = mags[l]
            mass = m.sum()
            if mass > 0:
                h = entropies[l]
                p = probs[l]
                with np.errstate(divide="ignore"):
                    ent_g = np.where(p > 0, -(np.log(p) + h) / mass, 0.0)
            else:
                ent_g = np.zeros_like(m)
            t = t + (lam * (mu1 + mu2 * ent_g))[None] * np.sign(posts[l]) / n
        gb = np.einsum("nji,ni->ji", t, silus[l], optimize=True)
        gs = np.einsum("nji,nji->ji", t, spline_sums[l], optimize=True)
        gc = np.einsum("nji,nim->jim", t, basis[l], optimize=True) * layer.spline_weight[:, :, None]
        grads[l] = LayerGrads(gb, gs, gc)
        if l > 0:
            spline_d = spline_contract(basis_d[l], layer.coef)
            phi_prime = (
                layer.base_weight[None] * silu_ds[l][:, None, :]
                + layer.spline_weight[None] * spline_d
            )
            g = np.einsum("nji,nji->ni", t, phi_prime, optimize=True)
    return breakdown, grads


def loss(net: KanNetwork, inputs, targets, config: TrainConfig) -> LossBreakdown:
    """Loss breakdown on a dataset; total = pred + lamb*(mu1*l1 + mu2*entropy)."""
    x, y = _check_xy(net, inputs, targets)
    breakdown, _ = _loss_and_grads(net, x, y, config, want_grads=False)
    return breakdown


def gradients(net: KanNetwork, inputs, targets, config: TrainConfig) -> list[LayerGrads]:
    """Exact gradient of the total loss w.r.t. every parameter."""
    x, y = _check_xy(net, inputs, targets)
    _, grads = _loss_and_grads(net, x, y, config, want_grads=True)
    return grads


def train(
    net: KanNetwork, inputs, targets, config: TrainConfig
) -> tuple[KanNetwork, list[LossBreakdown]]:
    """Run ``config.steps`` Adam updates; returns the trained copy and the
    per-step loss history (evaluated before each update).

    With ``keep_best`` the returned network is the snapshot with the lowest
    recorded total loss instead of the final iterate.
    """
    x, y = _check_xy(net, inputs, targets)
    net = net.copy()
    if config.steps == 0:
        return net, []
    rng = make_rng(config.seed)

    params = [(l.base_weight, l.spline_weight, l.coef) for l in net.layers]
    adam_m = [tuple(np.zeros_like(p) for p in group) for group in params]
    adam_v = [tuple(np.zeros_like(p) for p in group) for group in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr = config.learning_rate

    full_batch = config.batch_size is None or config.batch_size >= x.shape[0]
    basis0_full = None
    if full_batch:
        basis0_full, _ = _basis_tensor(net.grid, x, False)

    history: list[LossBreakdown] = []
    best_total = np.inf
    best_params = None
    for step in range(1, config.steps + 1):
        if full_batch:
            bx, by, b0 = x, y, basis0_full
        else:
            idx = rng.integers(0, x.shape[0], size=config.batch_size)
            bx, by, b0 = x[idx], y[idx], None
        breakdown, grads = _loss_and_grads(net, bx, by, config, want_grads=True, basis0=b0)
        if not np.isfinite(breakdown.total):
            raise DivergenceError(f"non-finite loss at step {step}: {breakdown}")
        history.append(breakdown)
        if config.keep_best and breakdown.total < best_total:
            best_total = breakdown.total
            best_params = [tuple(p.copy() for p in group) for group in params]

        corr1 = 1.0 - beta1**step
        corr2 = 1.0 - beta2**step
        for group, m_group, v_group, grad in zip(params, adam_m, adam_v, grads):
            for p, m, v, g in zip(
                group, m_group, v_group, (grad.base_weight, grad.spline_weight, grad.coef)
            ):
                m *= beta1
                m += (1 - beta1) * g
                v *= beta2
                v += (1 - beta2) * g * g
                p -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
                if not np.all(np.isfinite(p)):
                    raise DivergenceError(f"non-finite parameters at step {step}")

    if config.keep_best and best_params is not None:
        for group, best in zip(params, best_params):
            for p, b in zip(group, best):
                p[...] = b
    return net, history


def write_history_csv(history: list[LossBreakdown], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "pred_loss", "l1", "entropy", "total"])
        for i, row in enumerate(history):
            writer.writerow(
                [i, f"{row.pred_loss:.17g}", f"{row.l1_term:.17g}",
                 f"{row.entropy_term:.17g}", f"{row.total:.17g}"]
            )
