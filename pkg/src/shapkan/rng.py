"""Seeded random number generation.

All stochastic code paths draw from a Philox counter-based generator so a
single integer seed reproduces every stream, and run manifests can name the
exact algorithm (``philox4x64-10``) for cross-implementation matching.
"""

from __future__ import annotations

import numpy as np

PRNG_NAME = "philox4x64-10"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))
