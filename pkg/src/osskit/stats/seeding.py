"""Deterministic seed derivation independent of call order or threading."""

import numpy as np


def derive_seed(seed, *keys: int) -> np.random.SeedSequence:
    """Child seed of ``seed`` addressed by ``keys``.

    Unlike ``SeedSequence.spawn`` this is stateless: the same (seed, keys)
    always yields the same stream.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(keys))
    return np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
