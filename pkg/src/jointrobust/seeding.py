"""Stable seed derivation.

Child seeds are 64-bit integers mixed from a tuple of non-negative integers
with numpy's ``SeedSequence`` hash, so the same key gives the same stream on
every platform and in any evaluation order.
"""

from __future__ import annotations

import numpy as np


def derive_seed(*key: int) -> int:
    words = [int(k) for k in key]
    if any(k < 0 for k in words):
        raise ValueError("seed key components must be non-negative")
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def rng_for(*key: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*key))
