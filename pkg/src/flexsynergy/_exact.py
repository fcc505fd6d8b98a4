"""Correctly rounded sums of price x quantity products.

Horizon totals are accumulated exactly (error-free products + ``math.fsum``)
so that algebraically equal totals, e.g. a coalition's reservation payment
and the sum of its assets' payments, come out as the same float.
"""

from __future__ import annotations

import math

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1


def _split(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def two_product(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``a * b == p + e`` exactly (Dekker), barring overflow."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


def exact_sum(values) -> float:
    return math.fsum(np.ravel(np.asarray(values, dtype=np.float64)).tolist())


def exact_dot(prices, quantities) -> float:
    """Correctly rounded value of ``sum(prices * quantities)``."""
    p, e = two_product(np.ravel(prices), np.ravel(quantities))
    return math.fsum(p.tolist() + e.tolist())


def exact_dot_rows(prices: np.ndarray, quantities: np.ndarray) -> list[float]:
    """:func:`exact_dot` applied to each row of two 2-D arrays."""
    p, e = two_product(prices, quantities)
    return [math.fsum(pr + er) for pr, er in zip(p.tolist(), e.tolist())]
