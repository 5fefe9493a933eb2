"""Counter-based random streams.

Every draw is a pure function of ``(seed, *keys)``, so results do not depend
on evaluation order, chunking or the number of worker threads.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def keyed_bits(seed: int, *keys) -> np.ndarray:
    """64 random bits per broadcast element of ``keys``."""
    with np.errstate(over="ignore"):
        h = _mix(np.asarray(seed % (1 << 64), dtype=np.uint64) + _GOLDEN)
        for k in keys:
            k = np.asarray(k).astype(np.int64).astype(np.uint64)
            h = _mix(h ^ (k * _GOLDEN + _M1))
    return np.asarray(h, dtype=np.uint64)


def keyed_uniform(seed: int, *keys) -> np.ndarray:
    """Uniform floats in [0, 1) with 53 bits of resolution."""
    bits = keyed_bits(seed, *keys)
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def keyed_normal(seed: int, *keys) -> np.ndarray:
    """Standard normal draws (Box-Muller over two independent sub-streams)."""
    u1 = keyed_uniform(seed, *keys, 0)
    u2 = keyed_uniform(seed, *keys, 1)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
