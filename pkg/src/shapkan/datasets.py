"""Synthetic benchmark tasks and tabular IO.

Four closed-form regression targets are provided; inputs are standard normal
draws rejected into a requested range, so shifted evaluation windows (for
covariate-shift studies) keep the same underlying density. CSV round-trips
are lossless for doubles.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .rng import make_rng
from .symbolic import bessel_j0

_MAX_ABS_BOUND = 10.0  # rejection from N(0,1) further out would stall


@dataclass(frozen=True)
class SyntheticTask:
    name: str
    input_dim: int
    fn: Callable[[np.ndarray], np.ndarray]


def _multiplication(x):
    return x[:, 0] * x[:, 1]


def _special(x):
    return np.exp(bessel_j0(20.0 * x[:, 0]) + x[:, 1] ** 2)


def _phase(x):
    return np.tanh(5.0 * ((x**4).sum(axis=1) - 1.0))


def _complex(x):
    return np.exp(np.sin(np.pi * x[:, 0]) + x[:, 1] ** 2)


TASKS = {
    "multiplication": SyntheticTask("multiplication", 2, _multiplication),
    "special": SyntheticTask("special", 2, _special),
    "phase": SyntheticTask("phase", 3, _phase),
    "complex": SyntheticTask("complex", 2, _complex),
}


@dataclass
class SampleSpec:
    n: int
    lo: float = -1.0
    hi: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if max(abs(self.lo), abs(self.hi)) > _MAX_ABS_BOUND:
            raise ValueError(
                f"range [{self.lo}, {self.hi}] too far in the normal tail for rejection sampling"
            )


def truncated_normal(n: int, dim: int, lo: float, hi: float, rng: np.random.Generator) -> np.ndarray:
    """N(0,1) draws per coordinate, resampled until inside [lo, hi]."""
    cols = []
    for _ in range(dim):
        vals = np.empty(0)
        while len(vals) < n:
            chunk = rng.standard_normal(max(2048, 2 * (n - len(vals))))
            vals = np.concatenate([vals, chunk[(chunk >= lo) & (chunk <= hi)]])
        cols.append(vals[:n])
    return np.column_stack(cols)


def generate(task: SyntheticTask | str, spec: SampleSpec) -> tuple[np.ndarray, np.ndarray]:
    """Inputs and targets for one task under the sampling spec."""
    if isinstance(task, str):
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r}; valid: {', '.join(sorted(TASKS))}")
        task = TASKS[task]
    rng = make_rng(spec.seed)
    x = truncated_normal(spec.n, task.input_dim, spec.lo, spec.hi, rng)
    return x, task.fn(x)


class DatasetFormatError(ValueError):
    pass


def write_csv(path, inputs: np.ndarray, targets: np.ndarray) -> None:
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float).ravel()
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i+1}" for i in range(inputs.shape[1])] + ["y"])
        for row, y in zip(inputs, targets):
            writer.writerow([f"{v:.17g}" for v in row] + [f"{y:.17g}"])


def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a dataset written by :func:`write_csv`; strict about the header."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        dim = len(header) - 1
        expected = [f"x{i+1}" for i in range(dim)] + ["y"]
        if dim < 1:
            raise DatasetFormatError(f"{path}: header must be x1..xd,y, got {header}")
        if header != expected:
            bad = next(i for i, (h, e) in enumerate(zip(header, expected)) if h != e)
            raise DatasetFormatError(
                f"{path}: header column {bad + 1} is {header[bad]!r}, expected {expected[bad]!r}"
            )
        xs, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != dim + 1:
                raise DatasetFormatError(f"{path}:{lineno}: expected {dim + 1} fields, got {len(row)}")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
            xs.append(values[:-1])
            ys.append(values[-1])
    if not xs:
        raise DatasetFormatError(f"{path}: no data rows")
    return np.array(xs), np.array(ys)


def write_generation_manifest(path, task: str, spec: SampleSpec) -> None:
    """Sidecar JSON echoing how a dataset file was produced."""
    doc = {"task": task, "n": spec.n, "range": [spec.lo, spec.hi], "seed": spec.seed}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
