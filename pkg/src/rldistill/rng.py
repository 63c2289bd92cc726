"""Deterministic random-number plumbing.

All randomness in the package flows through counter-based Philox generators
keyed by 64-bit seeds derived here. A run is identified by one master seed;
every stage (dataset init, learner sampling, rollouts, evaluation, ...)
gets its own stream via ``stage_seed``, so stages can be reordered or
parallelized without perturbing each other, and evaluation seed domains
never collide with training ones.

Seed derivation is fixed bit-exactly:

    stage_seed(master, name, index)
        = splitmix64(splitmix64(master XOR fnv1a64(name)) XOR index)

where ``fnv1a64`` is the 64-bit FNV-1a hash of the UTF-8 stage name and
``splitmix64`` is the SplitMix64 finalizer. OS entropy is never consulted.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def splitmix64(z: int) -> int:
    """SplitMix64 finalizer: bijective 64-bit mixing."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stage_seed(master_seed: int, stage: str, index: int = 0) -> int:
    """Derive the 64-bit seed for (stage, index) under a master seed."""
    h = splitmix64((master_seed & _MASK64) ^ fnv1a64(stage.encode("utf-8")))
    return splitmix64(h ^ (index & _MASK64))


def stream(seed: int) -> np.random.Generator:
    """Counter-based generator for one 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


def substream(master_seed: int, stage: str, index: int = 0) -> np.random.Generator:
    return stream(stage_seed(master_seed, stage, index))
