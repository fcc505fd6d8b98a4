"""Counter-based random draws keyed by ``(seed, day, asset)``.

Every draw is a pure function of its key, so any subset of assets, any
prefix of a population, and any day can be realized independently and
always sees the same numbers.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def hash_keys(seed: int, day, asset) -> np.ndarray:
    """64-bit hash of each ``(seed, day, asset)`` triple; broadcasts like numpy."""
    day = np.asarray(day, dtype=np.int64).astype(np.uint64)
    asset = np.asarray(asset, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        h = _mix64(np.full(np.broadcast_shapes(day.shape, asset.shape), seed & _MASK64, dtype=np.uint64) + _GOLDEN)
        h = _mix64(h ^ (day * _GOLDEN))
        h = _mix64(h ^ (asset + _GOLDEN))
    return h


def uniform01(seed: int, day, asset) -> np.ndarray:
    """Uniform floats in [0, 1) with 53 bits of resolution."""
    return (hash_keys(seed, day, asset) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def uniform_hour(seed: int, day, asset, hours: int = 24) -> np.ndarray:
    """Hour index in ``1..hours``, uniform for each key."""
    return (np.floor(uniform01(seed, day, asset) * hours)).astype(np.int64) + 1
