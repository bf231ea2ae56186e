"""Command-line pipeline: data generation, training, scoring, pruning,
symbolic recovery, and the sampling-convergence benchmark.

Every command takes a single --seed, routes all randomness through the named
counter-based generator, and writes one manifest JSON next to its outputs,
so reruns with the same flags reproduce the output files byte for byte
(manifests carry the only timestamps).

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.
"""

from __future__ import annotations

import datetime
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .attribution import (
    EXACT_WIDTH_CAP,
    antithetic_shapley,
    adaptive_shapley,
    exact_shapley,
    permutation_shapley,
    vanilla_scores,
)
from .datasets import SampleSpec, TASKS, generate, read_csv, write_csv
from .network import forward, load_model, save_model
from .pruning import PruneCriterion, SamplingConfig, shapkan_prune, vanilla_prune
from .rng import PRNG_NAME
from .splines import make_grid
from .symbolic import snap_network
from .training import DivergenceError, TrainConfig, init_network, train, write_history_csv


def _write_manifest(command: str, config: dict, seed: int, outputs: list, started: float) -> Path:
    path = Path(str(outputs[0]) + ".manifest.json")
    doc = {
        "command": command,
        "config": config,
        "seed": seed,
        "tool_version": __version__,
        "prng": PRNG_NAME,
        "duration_seconds": time.time() - started,
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": [str(p) for p in outputs],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def _load_dataset(path: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        return read_csv(path)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None


def _load_net(path: str):
    try:
        return load_model(path)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot load model {path}: {exc}") from None


@click.group()
@click.version_option(__version__)
def main():
    """Spline-network toolkit: train, attribute, prune, and symbolify."""


@main.command("gen-data")
@click.option("--task", required=True, help=f"one of: {', '.join(sorted(TASKS))}")
@click.option("--n", type=int, required=True, help="number of samples")
@click.option("--range", "rng_", type=float, nargs=2, default=(-1.0, 1.0), show_default=True,
              help="inclusive sampling range (applies to every input)")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="output CSV")
def cmd_gen_data(task, n, rng_, seed, out):
    """Sample a synthetic task into a CSV dataset."""
    started = time.time()
    try:
        spec = SampleSpec(n=n, lo=rng_[0], hi=rng_[1], seed=seed)
        x, y = generate(task, spec)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    write_csv(out, x, y)
    _write_manifest("gen-data", {"task": task, "n": n, "range": list(rng_)}, seed, [out], started)
    click.echo(f"wrote {n} rows to {out}")


@main.command("train")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--widths", default="2,5,1", show_default=True, help="comma-separated node counts")
@click.option("--grid", type=int, default=3, show_default=True, help="spline grid intervals")
@click.option("--degree", type=int, default=3, show_default=True)
@click.option("--domain", type=float, nargs=2, default=(-1.0, 1.0), show_default=True)
@click.option("--lamb", type=float, default=0.0, show_default=True, help="sparsity penalty weight")
@click.option("--mu1", type=float, default=1.0, show_default=True)
@click.option("--mu2", type=float, default=1.0, show_default=True)
@click.option("--steps", type=int, default=2000, show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--batch-size", type=int, default=None, help="mini-batch size (default: full batch)")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-model", required=True, type=click.Path(dir_okay=False))
def cmd_train(data, widths, grid, degree, domain, lamb, mu1, mu2, steps, lr, batch_size, seed, out_model):
    """Fit a network to a CSV dataset; writes model, loss history, manifest."""
    started = time.time()
    x, y = _load_dataset(data)
    try:
        width_list = [int(w) for w in widths.split(",")]
    except ValueError:
        raise click.UsageError(f"cannot parse --widths {widths!r}") from None
    if len(width_list) < 2 or width_list[0] != x.shape[1] or width_list[-1] != 1:
        raise click.UsageError(
            f"--widths {widths!r} must start with the input dimension ({x.shape[1]}) and end with 1"
        )
    try:
        spline_grid = make_grid(degree, grid, *domain)
        net = init_network(width_list, spline_grid, seed=seed)
        config = TrainConfig(steps=steps, learning_rate=lr, lamb=lamb, mu1=mu1, mu2=mu2,
                             batch_size=batch_size, seed=seed)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    try:
        net, history = train(net, x, y, config)
    except DivergenceError as exc:
        click.echo(f"training diverged: {exc}", err=True)
        sys.exit(3)
    save_model(net, out_model)
    history_path = Path(out_model).with_suffix(".history.csv")
    write_history_csv(history, history_path)
    _write_manifest(
        "train",
        {"data": data, "widths": width_list, "grid": grid, "degree": degree,
         "domain": list(domain), "lamb": lamb, "mu1": mu1, "mu2": mu2,
         "steps": steps, "lr": lr, "batch_size": batch_size},
        seed, [out_model, history_path], started,
    )
    final = history[-1].total if history else float("nan")
    click.echo(f"trained {width_list} for {steps} steps, final loss {final:.6g}")


_SCORE_METHODS = ("shap-exact", "shap-perm", "shap-anti", "shap-adaptive", "vanilla")


@main.command("score")
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(_SCORE_METHODS), default="shap-exact", show_default=True)
@click.option("--layer", type=int, default=1, show_default=True, help="hidden layer to score")
@click.option("--permutations", type=int, default=256, show_default=True,
              help="sample count for shap-perm / shap-anti")
@click.option("--epsilon", type=float, default=1e-3, show_default=True, help="shap-adaptive stop")
@click.option("--m-max", type=int, default=1024, show_default=True, help="shap-adaptive cap")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="output prefix; reports written as <out>.json/.csv")
def cmd_score(model, data, method, layer, permutations, epsilon, m_max, seed, out):
    """Score one hidden layer's nodes; writes report JSON and CSV."""
    started = time.time()
    net = _load_net(model)
    x, _ = _load_dataset(data)
    outputs = []
    try:
        if method == "vanilla":
            _, cache = forward(net, x)
            rep_in, rep_out = vanilla_scores(net, cache)[layer]
            for rep, tag in ((rep_in, "vanilla_in"), (rep_out, "vanilla_out")):
                for ext, write in ((".json", rep.write_json), (".csv", rep.write_csv)):
                    p = Path(f"{out}.{tag}{ext}")
                    write(p)
                    outputs.append(p)
        else:
            if method == "shap-exact":
                report = exact_shapley(net, x, layer)
            elif method == "shap-perm":
                report = permutation_shapley(net, x, layer, permutations, seed=seed)
            elif method == "shap-anti":
                report = antithetic_shapley(net, x, layer, permutations, seed=seed)
            else:
                report = adaptive_shapley(net, x, layer, epsilon=epsilon, m_max=m_max, seed=seed)
            for p, write in ((Path(f"{out}.json"), report.write_json),
                             (Path(f"{out}.csv"), report.write_csv)):
                write(p)
                outputs.append(p)
    except (ValueError, KeyError) as exc:
        raise click.UsageError(str(exc)) from None
    _write_manifest(
        "score",
        {"model": model, "data": data, "method": method, "layer": layer,
         "permutations": permutations, "epsilon": epsilon, "m_max": m_max},
        seed, outputs, started,
    )
    click.echo(f"scored layer {layer} with {method}: {len(outputs)} files")


@main.command("prune")
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["shapkan", "vanilla"]), default="shapkan",
              show_default=True)
@click.option("--ratio", type=float, default=None, help="drop nodes below this share of |score|")
@click.option("--number", type=int, default=None, help="drop this many lowest-|score| nodes per layer")
@click.option("--threshold", type=float, default=None, help="drop nodes with |score| below this")
@click.option("--epsilon", type=float, default=1e-3, show_default=True, help="adaptive sampling stop")
@click.option("--m-max", type=int, default=1024, show_default=True, help="adaptive sampling cap")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-model", required=True, type=click.Path(dir_okay=False))
def cmd_prune(model, data, method, ratio, number, threshold, epsilon, m_max, seed, out_model):
    """Prune hidden layers bottom-up; writes pruned model and plan JSON."""
    started = time.time()
    given = [(k, v) for k, v in (("ratio", ratio), ("number", number), ("threshold", threshold))
             if v is not None]
    if len(given) != 1:
        raise click.UsageError("give exactly one of --ratio / --number / --threshold")
    kind, value = given[0]
    net = _load_net(model)
    x, _ = _load_dataset(data)
    try:
        criterion = PruneCriterion(kind, value)
        if method == "shapkan":
            sampling = SamplingConfig(epsilon=epsilon, m_max=m_max, seed=seed)
            pruned, plan = shapkan_prune(net, x, criterion, sampling)
        else:
            pruned, plan = vanilla_prune(net, x, criterion)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    save_model(pruned, out_model)
    plan_path = Path(out_model).with_suffix(".plan.json")
    plan.write_json(plan_path)
    _write_manifest(
        "prune",
        {"model": model, "data": data, "method": method, "criterion": {kind: value},
         "epsilon": epsilon, "m_max": m_max},
        seed, [out_model, plan_path], started,
    )
    click.echo(f"pruned {net.widths} -> {pruned.widths}")


@main.command("symbolify")
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--interactive/--auto", default=False, show_default=True,
              help="pick each edge's primitive by hand instead of max r2")
@click.option("--top", type=int, default=5, show_default=True, help="candidates shown per edge")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="output prefix")
def cmd_symbolify(model, data, interactive, top, out):
    """Replace each edge with its best-fitting primitive and compose a formula."""
    started = time.time()
    net = _load_net(model)
    x, _ = _load_dataset(data)

    chooser = None
    if interactive:
        def chooser(layer, j, i, ranked):
            click.echo(f"edge layer {layer}, node {i} -> node {j}:")
            for idx, fit in enumerate(ranked[:top], start=1):
                click.echo(
                    f"  {idx}) {fit.primitive:5s} r2={fit.r2:.5f} "
                    f"a={fit.a:.4g} b={fit.b:.4g} c={fit.c:.4g} d={fit.d:.4g}"
                )
            pick = click.prompt("choice", default=1, type=click.IntRange(1, min(top, len(ranked))))
            return ranked[pick - 1]

    try:
        symbolic, warnings, r2_global = snap_network(net, x, choose=chooser)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    formula_path = Path(f"{out}.formula.txt")
    formula = symbolic.expression_text()
    formula_path.write_text(formula + "\n")
    fits_path = Path(f"{out}.fits.csv")
    symbolic.write_fit_table(fits_path)
    tree_path = Path(f"{out}.expression.json")
    symbolic.write_json(tree_path)
    _write_manifest(
        "symbolify",
        {"model": model, "data": data, "interactive": interactive, "r2_global": r2_global},
        0, [formula_path, fits_path, tree_path], started,
    )
    for l, j, i, r2 in warnings:
        click.echo(f"warning: edge ({l},{j},{i}) fit r2={r2:.4f} < 0.9", err=True)
    click.echo(formula)
    click.echo(f"global R^2 vs model output: {r2_global:.6f}")


@main.command("bench-sv")
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--layer", type=int, default=1, show_default=True)
@click.option("--sizes", default="32,64,128,256,512,1024", show_default=True,
              help="comma-separated permutation counts")
@click.option("--repeats", type=int, default=20, show_default=True)
@click.option("--antithetic/--no-antithetic", default=True, show_default=True,
              help="also benchmark the antithetic estimator")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="output CSV")
def cmd_bench_sv(model, data, layer, sizes, repeats, antithetic, seed, out):
    """Bias-versus-samples benchmark of the permutation estimators.

    Each row records the l2 distance between a sampled estimate and the
    exact values, with wall time; repeat r of every method uses seed+r so
    methods are compared on matched streams.
    """
    started = time.time()
    net = _load_net(model)
    x, _ = _load_dataset(data)
    try:
        size_list = [int(s) for s in sizes.split(",")]
    except ValueError:
        raise click.UsageError(f"cannot parse --sizes {sizes!r}") from None
    if not 1 <= layer <= len(net.widths) - 2:
        raise click.UsageError(f"layer {layer} is not a hidden layer of widths {net.widths}")
    if net.widths[layer] > EXACT_WIDTH_CAP:
        raise click.UsageError(
            f"layer width {net.widths[layer]} exceeds the exact cap ({EXACT_WIDTH_CAP}); "
            "bias against exact values cannot be computed"
        )
    exact = exact_shapley(net, x, layer).shapley
    methods = [("permutation", permutation_shapley)]
    if antithetic:
        methods.append(("antithetic", antithetic_shapley))
    rows = []
    for name, fn in methods:
        for m in size_list:
            for r in range(repeats):
                t0 = time.perf_counter()
                est = fn(net, x, layer, m, seed=seed + r)
                wall = time.perf_counter() - t0
                bias = float(np.linalg.norm(est.shapley - exact))
                rows.append((name, m, r, bias, wall))
    with Path(out).open("w", newline="") as fh:
        fh.write("method,m,repeat,l2_bias_to_exact,wall_seconds\n")
        for name, m, r, bias, wall in rows:
            fh.write(f"{name},{m},{r},{bias:.17g},{wall:.6f}\n")
    _write_manifest(
        "bench-sv",
        {"model": model, "data": data, "layer": layer, "sizes": size_list,
         "repeats": repeats, "antithetic": antithetic},
        seed, [out], started,
    )
    click.echo(f"wrote {len(rows)} benchmark rows to {out}")


if __name__ == "__main__":
    main()
