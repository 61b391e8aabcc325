"""Counter-based seeding.

Every random stream in the package is keyed by a tuple of integers
``(base_seed, role, index, ...)``.  The tuple is folded into a 128-bit key
by :func:`mix64` and fed to a Philox4x64 generator, so a stream depends only
on its key and never on the order in which streams are created.  This is
what makes parallel runs byte-reproducible.

The mixing function is SplitMix64's finalizer applied word by word::

    h = 0x9E3779B97F4A7C15
    for word in words:
        h = splitmix64(h ^ (word mod 2**64))
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# role tags
BROWNIAN = 1
OUTER = 2
MEAN = 3
INNER = 4
DENSITY = 5
EXAMPLE = 6
MOMENT = 7


def splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix64(*words: int) -> int:
    """Fold integers into one 64-bit value (order-sensitive)."""
    h = _GOLDEN
    for w in words:
        h = splitmix64(h ^ (int(w) & MASK64))
    return h


def stream_key(*words: int) -> int:
    """128-bit Philox key for the stream identified by ``words``."""
    return (mix64(*words) << 64) | mix64(*words, 0x5EED)


def substream(*words: int) -> np.random.Generator:
    """Generator for the stream identified by ``words``."""
    return np.random.Generator(np.random.Philox(key=stream_key(*words)))


def path_seed(base_seed: int, role: int, index: int) -> int:
    """64-bit seed of path ``index`` within ``role`` under ``base_seed``."""
    return mix64(base_seed, role, index)
