"""Deterministic stream spawning.

Every stochastic routine takes a ``seed`` and derives independent
substreams with ``spawn``; counter-based Philox keeps results identical
across thread counts and platforms.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *spawn_key: int) -> np.random.Generator:
    """Generator for (seed, spawn_key); same args -> same stream, always."""
    ss = np.random.SeedSequence(seed, spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))


def spawn(seed: int, n: int, *prefix: int) -> list[np.random.Generator]:
    """n independent generators under a common prefix (one per worker/start)."""
    return [make_rng(seed, *prefix, i) for i in range(n)]
