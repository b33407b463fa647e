"""Splittable deterministic seeding.

Every random stream in the package is derived from a named 64-bit seed plus a
tuple of integer keys, so that sub-streams (per attempt, per sample block, per
grid point) never share state and never touch a global generator.
"""

from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    if seed < 0 or seed > SEED_MASK:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))
