"""Seeded random streams.

Every run owns a ``numpy.random.Generator``. Independent replicates get
child streams derived from ``(master_seed, index)`` through
``SeedSequence`` spawn keys, so results never depend on scheduling order.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

MASK64 = (1 << 64) - 1


def make_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required for reproducible runs")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & MASK64)))


def substream(master_seed: int, *index: int) -> np.random.Generator:
    """Generator for replicate ``index`` (may be a tuple path) under ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed) & MASK64, spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(master_seed: int, *index: int) -> int:
    """64-bit integer seed derived from ``(master_seed, index)``."""
    ss = np.random.SeedSequence(int(master_seed) & MASK64, spawn_key=tuple(int(i) for i in index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def substreams(master_seed: int, n: int, offset: Sequence[int] = ()) -> list[np.random.Generator]:
    return [substream(master_seed, *offset, i) for i in range(n)]
