"""Deterministic per-work-item random streams.

Every random decision is keyed by (seed, *keys) so that results do not depend
on the order or thread in which work items execute.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def _sequence(seed: int, keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed) & _MASK, spawn_key=tuple(int(k) & _MASK for k in keys))


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based (Philox) generator for one work item."""
    return np.random.Generator(np.random.Philox(_sequence(seed, keys)))


def derive_seed(seed: int, *keys: int) -> int:
    """A 64-bit child seed for one work item."""
    return int(_sequence(seed, keys).generate_state(1, np.uint64)[0])
