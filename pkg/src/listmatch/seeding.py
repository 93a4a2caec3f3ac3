"""Seed derivation for reproducible, worker-count independent streams."""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, index: int) -> int:
    """Mix a master seed and a sub-stream index into a 64-bit seed."""
    return splitmix64(splitmix64(master & _MASK) ^ (index & _MASK))


def make_stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & _MASK))


def substream(master: int, index: int) -> np.random.Generator:
    return make_stream(derive_seed(master, index))
