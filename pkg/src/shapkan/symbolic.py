"""Symbolic recovery: snap trained edge functions to closed-form primitives.

Each edge activation is matched against a fixed library of univariate
primitives through the affine family c * g(a*x + b) + d. The inner
parameters (a, b) are found by a coarse grid search with (c, d) solved in
closed form at every cell, then the best cell is polished by local descent.
A pruned network's edges are snapped individually and composed into one
expression, with a final linear refit of the last layer's (c, d) against
the model output.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .network import KanNetwork, forward, layer_post_activations

_GUARD_EPS = 1e-8


def bessel_j0(x):
    """Bessel function of the first kind, order zero.

    Rational approximation below |x| = 8, Hankel asymptotic form beyond;
    absolute error stays below 1e-7 for |x| <= 25.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    ax = np.abs(np.atleast_1d(x))
    out = np.empty_like(ax)

    small = ax < 8.0
    if small.any():
        y = ax[small] ** 2
        num = 57568490574.0 + y * (-13362590354.0 + y * (651619640.7 + y * (
            -11214424.18 + y * (77392.33017 + y * (-184.9052456)))))
        den = 57568490411.0 + y * (1029532985.0 + y * (9494680.718 + y * (
            59272.64853 + y * (267.8532712 + y))))
        out[small] = num / den
    if (~small).any():
        a = ax[~small]
        z = 8.0 / a
        y = z * z
        xx = a - 0.785398164
        p0 = 1.0 + y * (-0.1098628627e-2 + y * (0.2734510407e-4 + y * (
            -0.2073370639e-5 + y * 0.2093887211e-6)))
        q0 = -0.1562499995e-1 + y * (0.1430488765e-3 + y * (-0.6911147651e-5 + y * (
            0.7621095161e-6 + y * (-0.934935152e-7))))
        out[~small] = np.sqrt(0.636619772 / a) * (np.cos(xx) * p0 - z * np.sin(xx) * q0)
    return float(out[0]) if scalar else out


def _safe_log(u):
    return np.log(np.abs(u) + _GUARD_EPS)


def _safe_inv(u):
    return 1.0 / np.copysign(np.maximum(np.abs(u), _GUARD_EPS), u)


@dataclass(frozen=True)
class Primitive:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    fmt: str  # text template with {u} for the affine argument


DEFAULT_LIBRARY: tuple[Primitive, ...] = (
    Primitive("x", lambda u: u, "({u})"),
    Primitive("x^2", lambda u: u**2, "({u})^2"),
    Primitive("x^3", lambda u: u**3, "({u})^3"),
    Primitive("x^4", lambda u: u**4, "({u})^4"),
    Primitive("exp", np.exp, "exp({u})"),
    Primitive("sin", np.sin, "sin({u})"),
    Primitive("tanh", np.tanh, "tanh({u})"),
    Primitive("log", _safe_log, "log(|{u}|)"),
    Primitive("sqrt", lambda u: np.sqrt(np.abs(u)), "sqrt(|{u}|)"),
    Primitive("1/x", _safe_inv, "1/({u})"),
    Primitive("J0", bessel_j0, "J0({u})"),
)

_BY_NAME = {p.name: p for p in DEFAULT_LIBRARY}


@dataclass
class SymbolicFit:
    """One edge matched as c * g(a*x + b) + d with coefficient of
    determination ``r2`` (1 means exact)."""

    primitive: str
    a: float
    b: float
    c: float
    d: float
    r2: float

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        g = _BY_NAME[self.primitive].fn
        return self.c * g(self.a * np.asarray(x, dtype=float) + self.b) + self.d

    def term_text(self, arg: str) -> str:
        inner = _affine_text(self.a, self.b, arg)
        body = _BY_NAME[self.primitive].fmt.format(u=inner)
        return f"{self.c:.4g}*{body} + {self.d:.4g}"


def _affine_text(a: float, b: float, arg: str) -> str:
    if b >= 0:
        return f"{a:.4g}*{arg} + {b:.4g}"
    return f"{a:.4g}*{arg} - {-b:.4g}"


def _fit_cd(z: np.ndarray, ys: np.ndarray, var_y: float):
    """Closed-form least squares of ys on [z, 1]; returns (c, d, r2) with the
    r2 of the resulting affine fit. Moments are centered before use, so near
    constant feature rows stay numerically sane."""
    mz = z.mean(axis=-1, keepdims=True)
    zc = z - mz
    vz = (zc * zc).mean(axis=-1)
    cov = (zc * (ys - ys.mean())).mean(axis=-1)
    ok = vz > 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(ok, cov / np.where(ok, vz, 1.0), 0.0)
        r2 = np.where(ok, cov**2 / (np.where(ok, vz, 1.0) * var_y), 0.0)
    d = ys.mean() - c * mz[..., 0]
    r2 = np.minimum(np.where(np.isfinite(r2), r2, -np.inf), 1.0)
    return c, d, r2


_A_GRID = np.concatenate([-np.logspace(-1, 1, 41)[::-1], np.logspace(-1, 1, 41)])
_B_GRID = np.linspace(-3.0, 3.0, 31)


def fit_edge(xs, ys, library: tuple[Primitive, ...] = DEFAULT_LIBRARY) -> list[SymbolicFit]:
    """Rank every library primitive by how well c*g(a*x+b)+d matches the
    samples; best fit first.

    (a, b) run over a fixed log/linear grid with (c, d) solved exactly per
    cell, and each primitive's best cell is refined by Nelder-Mead descent.
    Constant samples short-circuit to the flat fit c=0.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be matching 1-d sample vectors")
    if len(xs) < 20:
        raise ValueError(f"need at least 20 samples, got {len(xs)}")
    var_y = float(ys.var())
    if var_y <= 1e-24 * max(1.0, float(np.mean(ys**2))):
        return [SymbolicFit("x", 1.0, 0.0, 0.0, float(ys.mean()), 1.0)]

    fits = [_fit_primitive(prim, xs, ys, var_y) for prim in library]
    fits.sort(key=lambda f: -f.r2)
    return fits


def _fit_primitive(prim: Primitive, xs: np.ndarray, ys: np.ndarray, var_y: float) -> SymbolicFit:
    def column(a: float):
        """Best (r2, b, c, d) at fixed a over the b grid."""
        with np.errstate(over="ignore", invalid="ignore"):
            z = prim.fn(a * xs[None, :] + _B_GRID[:, None])
        z = np.where(np.isfinite(z), z, 0.0)
        c, d, r2 = _fit_cd(z, ys, var_y)
        i = int(np.argmax(r2))
        return float(r2[i]), float(_B_GRID[i]), float(c[i]), float(d[i])

    def point(a: float, b: float):
        with np.errstate(over="ignore", invalid="ignore"):
            z = prim.fn(a * xs + b)
        if not np.all(np.isfinite(z)):
            return -np.inf, 0.0, 0.0
        c, d, r2 = _fit_cd(z[None, :], ys, var_y)
        return float(r2[0]), float(c[0]), float(d[0])

    best = None
    for a in _A_GRID:
        r2, b, c, d = column(a)
        if best is None or r2 > best[0]:
            best = (r2, float(a), b, c, d)

    # The grid clips |a|; oscillatory primitives in particular can have their
    # true scale beyond it, reachable only by continuing the log ladder
    # outward from the boundary (a short dip must not end the climb).
    step = float(_A_GRID[-1] / _A_GRID[-2])
    for sign in (1.0, -1.0):
        a, strikes = sign * float(_A_GRID[-1]), 0
        for _ in range(64):
            a *= step
            r2, b, c, d = column(a)
            if r2 > best[0]:
                best = (r2, a, b, c, d)
                strikes = 0
            else:
                strikes += 1
                if strikes >= 4:
                    break

    # Local descent in two moves: climb the b-maximized profile in a (tracks
    # optima between grid rungs), then polish (a, b) jointly.
    prof = minimize(
        lambda v: -column(float(v[0]))[0], [best[1]],
        method="Nelder-Mead", options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 120},
    )
    a1 = float(prof.x[0])
    if np.isfinite(prof.fun) and -prof.fun > best[0] and abs(a1) > 1e-12:
        r2, b, c, d = column(a1)
        best = (r2, a1, b, c, d)

    res = minimize(
        lambda v: -point(float(v[0]), float(v[1]))[0], [best[1], best[2]],
        method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 600},
    )
    a2, b2 = float(res.x[0]), float(res.x[1])
    if np.isfinite(res.fun) and -res.fun > best[0] and abs(a2) > 1e-12:
        r2, c, d = point(a2, b2)
        best = (r2, a2, b2, c, d)
    return SymbolicFit(prim.name, best[1], best[2], best[3], best[4], best[0])


@dataclass
class SymbolicModel:
    """Edge-for-edge symbolic mirror of a network."""

    widths: list[int]
    fits: list[list[list[SymbolicFit]]]  # [layer][out][in]

    def evaluate(self, inputs) -> np.ndarray:
        x = np.asarray(inputs, dtype=float)
        for layer_fits in self.fits:
            nxt = np.zeros((x.shape[0], len(layer_fits)))
            for j, row in enumerate(layer_fits):
                for i, fit in enumerate(row):
                    nxt[:, j] += fit.evaluate(x[:, i])
            x = nxt
        return x

    def node_text(self, layer: int, node: int, input_names: list[str]) -> str:
        if layer == 0:
            return input_names[node]
        terms = []
        for i, fit in enumerate(self.fits[layer - 1][node]):
            arg = self.node_text(layer - 1, i, input_names)
            if layer > 1:
                arg = f"({arg})"
            terms.append(fit.term_text(arg))
        return " + ".join(terms)

    def expression_text(self, input_names: list[str] | None = None) -> str:
        names = input_names or [f"x{i+1}" for i in range(self.widths[0])]
        last = len(self.widths) - 1
        lines = [
            self.node_text(last, j, names) for j in range(self.widths[-1])
        ]
        return "\n".join(lines)

    def _node_tree(self, layer: int, node: int) -> dict:
        if layer == 0:
            return {"kind": "var", "index": node}
        return {
            "kind": "sum",
            "terms": [
                {
                    "kind": "apply",
                    "primitive": fit.primitive,
                    "a": fit.a, "b": fit.b, "c": fit.c, "d": fit.d, "r2": fit.r2,
                    "arg": self._node_tree(layer - 1, i),
                }
                for i, fit in enumerate(self.fits[layer - 1][node])
            ],
        }

    def to_dict(self) -> dict:
        last = len(self.widths) - 1
        return {
            "widths": list(self.widths),
            "outputs": [self._node_tree(last, j) for j in range(self.widths[-1])],
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_fit_table(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["layer", "out", "in", "primitive", "a", "b", "c", "d", "r2"])
            for l, layer_fits in enumerate(self.fits):
                for j, row in enumerate(layer_fits):
                    for i, f in enumerate(row):
                        writer.writerow(
                            [l, j, i, f.primitive, f"{f.a:.17g}", f"{f.b:.17g}",
                             f"{f.c:.17g}", f"{f.d:.17g}", f"{f.r2:.17g}"]
                        )


def snap_network(
    net: KanNetwork,
    inputs,
    library: tuple[Primitive, ...] = DEFAULT_LIBRARY,
    choose: Callable[[int, int, int, list[SymbolicFit]], SymbolicFit] | None = None,
) -> tuple[SymbolicModel, list[tuple[int, int, int, float]], float]:
    """Fit every edge on its cached (input, activation) samples and compose.

    ``choose`` may override the max-r2 pick per edge (layer, out, in, ranked
    fits). Returns the symbolic model, warnings for edges with r2 < 0.9,
    and the global R^2 of the composed expression against the model output.
    The last layer's (c, d) are refit jointly against the output with one
    linear solve, absorbing per-edge fitting bias.
    """
    x = np.asarray(inputs, dtype=float)
    outputs, cache = forward(net, x)
    fits: list[list[list[SymbolicFit]]] = []
    warnings: list[tuple[int, int, int, float]] = []
    for l, layer in enumerate(net.layers):
        post = layer_post_activations(layer, cache.node_values[l])
        layer_fits = []
        for j in range(layer.n_out):
            row = []
            for i in range(layer.n_in):
                ranked = fit_edge(cache.node_values[l][:, i], post[:, j, i], library)
                fit = choose(l, j, i, ranked) if choose else ranked[0]
                if fit.r2 < 0.9:
                    warnings.append((l, j, i, fit.r2))
                row.append(fit)
            layer_fits.append(row)
        fits.append(layer_fits)
    model = SymbolicModel(list(net.widths), fits)
    _refit_output(model, x, outputs)
    expr = model.evaluate(x)
    ss_tot = float(((outputs - outputs.mean(axis=0)) ** 2).sum())
    ss_res = float(((expr - outputs) ** 2).sum())
    r2_global = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res < 1e-18 else 0.0)
    return model, warnings, r2_global


def _refit_output(model: SymbolicModel, inputs: np.ndarray, targets: np.ndarray) -> None:
    """One linear solve per output node updating the last layer's (c, d)."""
    x = np.asarray(inputs, dtype=float)
    for layer_fits in model.fits[:-1]:
        nxt = np.zeros((x.shape[0], len(layer_fits)))
        for j, row in enumerate(layer_fits):
            for i, fit in enumerate(row):
                nxt[:, j] += fit.evaluate(x[:, i])
        x = nxt
    last = model.fits[-1]
    for j, row in enumerate(last):
        cols = []
        for i, fit in enumerate(row):
            g = _BY_NAME[fit.primitive].fn
            cols.append(g(fit.a * x[:, i] + fit.b))
        design = np.column_stack(cols + [np.ones(x.shape[0])])
        coefs, *_ = np.linalg.lstsq(design, targets[:, j], rcond=None)
        intercept = coefs[-1] / len(row)
        for i, fit in enumerate(row):
            fit.c = float(coefs[i])
            fit.d = float(intercept)
