"""SplitMix64 streams.

Output ``i`` (0-based) of the stream seeded with ``s`` is
``mix(s + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)``.  Everything random in
the package (defect bits, per-sample seeds, test vectors) is drawn from
this stream so results are reproducible across platforms.
"""
from __future__ import annotations

import numpy as np

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def splitmix64(seed: int) -> int:
    """First output of the stream seeded with ``seed``."""
    return _mix((seed + GOLDEN_GAMMA) & _MASK64)


def splitmix64_stream(seed: int, n: int) -> np.ndarray:
    """First ``n`` outputs of the stream seeded with ``seed`` as uint64."""
    with np.errstate(over="ignore"):
        i = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(seed & _MASK64) + i * np.uint64(GOLDEN_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def bernoulli_bits(seed: int, n: int, p: float) -> np.ndarray:
    """``n`` independent Bernoulli(p) draws; draw i is ``out_i < p * 2**64``."""
    if p <= 0.0:
        return np.zeros(n, dtype=bool)
    if p >= 1.0:
        return np.ones(n, dtype=bool)
    threshold = int(p * 2.0**64)
    return splitmix64_stream(seed, n) < np.uint64(threshold)


def uniform_pm1(seed: int, n: int) -> np.ndarray:
    """``n`` doubles uniform on [-1, 1) from the top 53 bits of each output."""
    u = (splitmix64_stream(seed, n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return 2.0 * u - 1.0
