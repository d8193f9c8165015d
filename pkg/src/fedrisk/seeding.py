"""Seeded random streams.

Streams are numpy ``Generator`` objects over PCG64, whose output for a given
seed is fixed across platforms and numpy releases.
"""
from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for ``seed``; extra integers select an independent sub-stream."""
    if stream:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))
    return np.random.Generator(np.random.PCG64(int(seed)))
