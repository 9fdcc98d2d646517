"""Portable SplitMix64 generator.

The stream is fully specified by three constants so the same seed yields the
same draws in any language:

    state_{n+1} = state_n + 0x9E3779B97F4A7C15            (mod 2**64)
    z = state_{n+1}
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9               (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB               (mod 2**64)
    out = z ^ (z >> 31)

Because the state advances by a fixed increment, the n-th output depends only
on ``seed + n * gamma``; bulk draws are vectorized on that counter.
"""

from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1


def _mix_scalar(z: int) -> int:
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Deterministic 64-bit generator with a tiny, documented state."""

    def __init__(self, seed: int = 0):
        seed = int(seed)
        if not 0 <= seed <= MASK64:
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
        self.state = seed

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return _mix_scalar(self.state)

    def u64_array(self, n: int) -> np.ndarray:
        """Return the next ``n`` outputs as a uint64 array (same stream as ``next_u64``)."""
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GAMMA)
            out = _mix_array(z)
        self.state = (self.state + n * GAMMA) & MASK64
        return out

    def below(self, n: int) -> int:
        """Unbiased integer in ``[0, n)`` by rejection of the low remainder band."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = (1 << 64) % n
        while True:
            x = self.next_u64()
            if x >= threshold:
                return x % n

    def random(self, size: int | tuple[int, ...]) -> np.ndarray:
        """Doubles in ``[0, 1)`` built from the top 53 bits of each output."""
        shape = (size,) if isinstance(size, int) else tuple(size)
        n = int(np.prod(shape, dtype=np.int64))
        bits = self.u64_array(n) >> np.uint64(11)
        return (bits.astype(np.float64) * 2.0**-53).reshape(shape)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return low + (high - low) * self.random(size)

    def normal(self, size) -> np.ndarray:
        """Standard normals by Box-Muller on pairs of uniforms."""
        shape = (size,) if isinstance(size, int) else tuple(size)
        n = int(np.prod(shape, dtype=np.int64))
        m = (n + 1) // 2
        u = self.random(2 * m).reshape(m, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        z = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1).ravel()
        return z[:n].reshape(shape)

    def choice(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)`` by a partial Fisher-Yates shuffle."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot draw {k} distinct items from {n}")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return np.asarray(pool[:k], dtype=np.int64)
