"""Seeded random streams.

Every stochastic routine in the package takes an explicit
``numpy.random.Generator``.  They are all built on the Philox counter-based
bit generator so streams are reproducible across platforms and can be split
deterministically with ``SeedSequence``.
"""
from __future__ import annotations

import numpy as np

RNG_NAME = "philox4x64"
RNG_VERSION = 1


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Return a Philox generator for ``seed``."""
    return np.random.Generator(np.random.Philox(seed))


def spawn(seed: int | np.random.SeedSequence, n: int) -> list[np.random.Generator]:
    """Split ``seed`` into ``n`` independent generators."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [make_rng(child) for child in ss.spawn(n)]


def expand_seeds(base_seed: int, n: int) -> list[int]:
    """Derive ``n`` integer seeds from a base seed (stable across platforms)."""
    if n < 1:
        raise ValueError("need at least one seed")
    state = np.random.SeedSequence(base_seed).generate_state(n, dtype=np.uint32)
    return [int(x) for x in state]


def draw_index(cumulative: np.ndarray, u: float) -> int:
    """Inverse-CDF draw from a cumulative probability row."""
    i = int(np.searchsorted(cumulative, u, side="right"))
    return min(i, cumulative.shape[-1] - 1)


def cumulative(probs: np.ndarray) -> np.ndarray:
    """Cumulative sums along the last axis with the final entry pinned to 1."""
    cum = np.cumsum(probs, axis=-1)
    cum[..., -1] = 1.0
    return cum
