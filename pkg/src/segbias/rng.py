"""Seeded splitmix64 stream used for every sampling decision in the toolkit.

The generator is pinned to fixed constants so that manifests and synthetic
datasets are reproducible bit-for-bit across machines and languages:

    state' = state + 0x9E3779B97F4A7C15            (mod 2^64)
    z = state'
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9       (mod 2^64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB       (mod 2^64)
    z = z ^ (z >> 31)
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Deterministic 64-bit PRNG with documented constants."""

    __slots__ = ("_state", "_gauss_cache")

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64
        self._gauss_cache: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def next_below(self, n: int) -> int:
        """Integer in [0, n). Plain modulo reduction; the bias for n << 2^64 is
        far below anything observable at the pool sizes this toolkit handles."""
        if n <= 0:
            raise ValueError(f"next_below requires n >= 1, got {n}")
        return self.next_u64() % n

    def next_gauss(self) -> float:
        """Standard normal via Box-Muller; consumes two uniforms per pair."""
        if self._gauss_cache is not None:
            value = self._gauss_cache
            self._gauss_cache = None
            return value
        # u1 in (0, 1] so the log never sees zero.
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = self.next_float()
        radius = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._gauss_cache = radius * math.sin(theta)
        return radius * math.cos(theta)

    def sample_without_replacement(self, items: list, k: int) -> list:
        """First k entries of a partial Fisher-Yates shuffle of ``items``.

        ``items`` is consumed in the order given; callers that need a
        canonical result must sort beforehand.
        """
        if k < 0:
            raise ValueError(f"sample size must be >= 0, got {k}")
        if k > len(items):
            raise ValueError(f"cannot sample {k} from {len(items)} items")
        pool = list(items)
        for i in range(k):
            j = i + self.next_below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]
