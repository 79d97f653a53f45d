"""Deterministic pseudo-random source shared by every sampling path.

The generator is SplitMix64 with the published mixing constants, so a seed
pins the exact draw sequence on every platform and in any reimplementation.
Derived draws are fixed too: uniform reals take the top 53 bits scaled by
2**-53, and bounded integers use rejection-free range reduction on the upper
bits of a 128-bit product.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class Rng:
    """SplitMix64 stream. Single-owner: never share one instance across threads."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """One real in [0, 1)."""
        return (self.next64() >> 11) * 2.0**-53

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n) via the upper bits of a 128-bit product."""
        if n <= 0:
            raise ValueError(f"randrange needs n >= 1, got {n}")
        return (self.next64() * n) >> 64

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p

    def split(self) -> Rng:
        """Child stream seeded from one draw of this one."""
        return Rng(self.next64())

    # Vectorized draws. These consume exactly n states of the same sequence
    # as n scalar next64() calls, so scalar and array paths interleave safely.

    def next64_array(self, n: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            steps = np.arange(1, n + 1, dtype=np.uint64)
            z = np.uint64(self.state) + steps * np.uint64(_GOLDEN)
            self.state = (self.state + n * _GOLDEN) & _MASK
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            return z ^ (z >> np.uint64(31))

    def uniform_array(self, n: int) -> np.ndarray:
        return (self.next64_array(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal_array(self, n: int) -> np.ndarray:
        """Standard normals via Box-Muller; draws 2*ceil(n/2) uniforms (u1 block, then u2)."""
        m = (n + 1) // 2
        u1 = self.uniform_array(m)
        u2 = self.uniform_array(m)
        u1[u1 == 0.0] = 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        out = np.empty(2 * m, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def shuffle(self, items: np.ndarray) -> None:
        """In-place Fisher-Yates using randrange draws (one per position, descending)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]
