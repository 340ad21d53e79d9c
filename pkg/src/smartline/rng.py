"""Deterministic random number generation.

Reproducibility is a hard contract here: the same seed must produce the same
simulated plant, the same bootstrap samples, and byte-identical model files on
every run and platform. The stdlib Mersenne Twister makes no cross-version
stream promise for the float helpers, so this module pins an explicit,
published algorithm instead and treats it as part of the package's
compatibility surface.

Algorithm
---------
SplitMix64, used in counter mode. Draw ``i`` (1-based) for seed ``s`` is::

    z = (s + i * 0x9E3779B97F4A7C15) mod 2**64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2**64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2**64
    u64 = z ^ (z >> 31)

Derived values:

* float in [0, 1): ``(u64 >> 11) * 2**-53``
* gaussian: Box-Muller. One gaussian consumes exactly two u64 draws ``a, b``:
  ``u1 = 1 - float(a)`` (so it lies in (0, 1]), ``u2 = float(b)``, and
  ``z = sqrt(-2 ln u1) * cos(2 pi u2)``.
* integer below n: ``u64 mod n``. The modulo bias is below 2**-53 for any n
  this package uses, which is far beneath every tolerance in the test suite.

Named substreams (one per machine, per tree, and so on) are derived as
``seed XOR fnv1a64(name)`` with the 64-bit FNV-1a hash of the UTF-8 name.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_TWO_NEG53 = 2.0 ** -53


def fnv1a64(name: str) -> int:
    """64-bit FNV-1a hash of the UTF-8 encoding of ``name``."""
    h = _FNV_OFFSET
    for byte in name.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & MASK64
    return h


def mix64(z: int) -> int:
    """SplitMix64 output function applied to an already-advanced state."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


class Rng:
    """Counter-based SplitMix64 stream.

    The counter form means scalar draws and vectorized block draws produce the
    identical sequence: block methods simply advance the counter by the block
    length.
    """

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int, counter: int = 0):
        self.seed = seed & MASK64
        self.counter = counter

    @classmethod
    def for_stream(cls, seed: int, name: str) -> "Rng":
        """Independent substream for a named entity (machine, channel, ...)."""
        return cls((seed & MASK64) ^ fnv1a64(name))

    def next_u64(self) -> int:
        self.counter += 1
        return mix64(self.seed + self.counter * _GOLDEN)

    def next_float(self) -> float:
        """Uniform in [0, 1)."""
        return (self.next_u64() >> 11) * _TWO_NEG53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + self.next_float() * (hi - lo)

    def next_gaussian(self) -> float:
        """Standard normal via Box-Muller; consumes exactly two u64 draws."""
        return float(self.gaussian_block(1)[0])

    def randint_below(self, n: int) -> int:
        """Integer in [0, n). See module docstring for the bias note."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def sample_without_replacement(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), by partial Fisher-Yates."""
        if k > n:
            raise ValueError("cannot sample more items than the population")
        pool = np.arange(n, dtype=np.int64)
        for i in range(k):
            j = i + self.randint_below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def u64_block(self, count: int) -> np.ndarray:
        """Next ``count`` u64 draws as a uint64 array (same stream as next_u64)."""
        idx = np.arange(self.counter + 1, self.counter + count + 1, dtype=np.uint64)
        self.counter += count
        z = np.uint64(self.seed) + idx * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def float_block(self, count: int) -> np.ndarray:
        return (self.u64_block(count) >> np.uint64(11)) * _TWO_NEG53

    def gaussian_block(self, count: int) -> np.ndarray:
        """Next ``count`` standard normals; consumes 2 * count u64 draws.

        Gaussian k is built from draws (2k, 2k+1) of the block, matching the
        scalar definition in the module docstring.
        """
        raw = self.u64_block(2 * count)
        f = (raw >> np.uint64(11)) * _TWO_NEG53
        u1 = 1.0 - f[0::2]
        u2 = f[1::2]
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def shuffled(self, n: int) -> np.ndarray:
        """A permutation of range(n)."""
        return self.sample_without_replacement(n, n)
