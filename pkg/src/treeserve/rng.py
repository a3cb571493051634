"""Stateless keyed randomness built on splitmix64.

Every random quantity in the simulator is a pure function of a key tuple of
integers, so outcomes never depend on the order in which they are evaluated.
Python's built-in ``hash`` is salted per process and must not be used here.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def mix(*keys: int) -> int:
    """Fold a tuple of integers into one 64-bit hash."""
    h = 0x8E12F5A34C29D96B
    for k in keys:
        h = _splitmix64(h ^ (k & _MASK))
    return h


def uniform(*keys: int) -> float:
    """Deterministic uniform draw in [0, 1) keyed on the arguments."""
    return (mix(*keys) >> 11) * (2.0 ** -53)


def uniform_in(lo: float, hi: float, *keys: int) -> float:
    """Deterministic uniform draw in [lo, hi)."""
    return lo + (hi - lo) * uniform(*keys)


def randint_in(lo: int, hi: int, *keys: int) -> int:
    """Deterministic integer draw in the inclusive range [lo, hi]."""
    if hi < lo:
        raise ValueError(f"empty range [{lo}, {hi}]")
    return lo + mix(*keys) % (hi - lo + 1)


def exponential(rate: float, *keys: int) -> float:
    """Deterministic exponential draw with the given rate (inverse scale)."""
    if rate <= 0.0:
        raise ValueError("rate must be positive")
    u = uniform(*keys)
    return -math.log1p(-u) / rate


def shuffled(items: list, *keys: int) -> list:
    """Fisher-Yates shuffle driven by keyed draws; returns a new list."""
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = mix(*keys, i) % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out
