"""Deterministic random numbers that do not depend on numpy's own generators.

The uniform source is a bank of xoshiro256** generators advanced in lockstep.
Lane states are filled from a splitmix64 counter sequence, which is the seeding
procedure recommended for the xoshiro family.  Outputs are interleaved lane by
lane within each step, so the stream for a given seed is a fixed function of
the seed alone: chunk sizes, platform, and numpy version do not change it.

Normal variates come from the inverse CDF applied to (0, 1) uniforms.  The
quantile function is ``scipy.special.ndtri`` (double precision), so two
implementations of this scheme agree to floating-point accuracy.

Independent streams are derived with :func:`derive_key`: hash a parent seed
together with integer tags (a stream domain, an episode index, a class id) and
seed a fresh generator with the result.  That keeps parallel work reproducible
without any shared, order-sensitive generator state.
"""

from __future__ import annotations

from typing import Final

import numpy as np
from scipy.special import ndtri

_MASK: Final = (1 << 64) - 1
_GOLDEN: Final = 0x9E3779B97F4A7C15
_MIX1: Final = 0xBF58476D1CE4E5B9
_MIX2: Final = 0x94D049BB133111EB

#: Number of parallel xoshiro256** lanes in one generator.
LANES: Final = 4096

_U64_TO_UNIT: Final = 2.0 ** -53


def splitmix64(state: int) -> int:
    """Return the splitmix64 output for ``state`` after one increment.

    Equivalent to advancing a splitmix64 generator whose state is ``state``
    by one step and returning its output.
    """
    z = (state + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def derive_key(seed: int, *parts: int) -> int:
    """Derive an independent 64-bit stream key from ``seed`` and integer tags.

    The same (seed, parts) always yields the same key; differing in any part
    (including order) yields an unrelated key.  Negative parts are folded into
    the 64-bit range first.
    """
    key = splitmix64(seed & _MASK)
    for part in parts:
        key = splitmix64(key ^ splitmix64(part & _MASK))
    return key


def _seed_block(seed: int, count: int) -> np.ndarray:
    # splitmix64 advances its state by a fixed constant, so the i-th output is
    # a closed-form function of seed and i and the whole block vectorizes.
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(seed & _MASK) + idx * np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class PortableRng:
    """Buffered stream of 64-bit words from a lane bank of xoshiro256**.

    ``next_u64(n)`` returns the next ``n`` words of the stream; ``uniform``
    and ``normal`` map those words to floats.  The stream position is the only
    mutable state, so interleaving calls of different sizes never changes
    which word lands where.
    """

    def __init__(self, seed: int) -> None:
        words = _seed_block(seed, 4 * LANES)
        state = words.reshape(4, LANES).copy()
        # an all-zero lane state is a fixed point of xoshiro; nudge it out
        dead = (state == 0).all(axis=0)
        if dead.any():
            state[0, dead] = np.uint64(_GOLDEN)
        self._state = state
        self._buffer = np.empty(0, dtype=np.uint64)
        self._start = 0

    def _fill(self, steps: int) -> np.ndarray:
        s0, s1, s2, s3 = (self._state[i] for i in range(4))
        out = np.empty((steps, LANES), dtype=np.uint64)
        five = np.uint64(5)
        nine = np.uint64(9)
        seventeen = np.uint64(17)
        for i in range(steps):
            out[i] = _rotl(s1 * five, 7) * nine
            t = s1 << seventeen
            s2 = s2 ^ s0
            s3 = s3 ^ s1
            s1 = s1 ^ s2
            s0 = s0 ^ s3
            s2 = s2 ^ t
            s3 = _rotl(s3, 45)
        self._state = np.stack([s0, s1, s2, s3])
        return out.reshape(-1)

    def next_u64(self, count: int) -> np.ndarray:
        """Return the next ``count`` stream words as a uint64 array."""
        if count < 0:
            raise ValueError("count must be non-negative")
        available = self._buffer.size - self._start
        if available >= count:
            out = self._buffer[self._start:self._start + count].copy()
            self._start += count
            return out
        head = self._buffer[self._start:]
        need = count - available
        steps = -(-need // LANES)
        block = self._fill(steps)
        self._buffer = block
        self._start = need
        return np.concatenate([head, block[:need]])

    def uniform(self, count: int) -> np.ndarray:
        """Uniform doubles on the open interval (0, 1)."""
        words = self.next_u64(count)
        return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _U64_TO_UNIT

    def normal(self, count: int) -> np.ndarray:
        """Standard normal doubles via the inverse CDF."""
        return ndtri(self.uniform(count))

    def randbelow(self, bound: int) -> int:
        """Uniform integer in [0, bound) by bitmask rejection."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        if bound == 1:
            return 0
        mask = (1 << (bound - 1).bit_length()) - 1
        while True:
            value = int(self.next_u64(1)[0]) & mask
            if value < bound:
                return value

    def permutation_prefix(self, n: int, take: int) -> list[int]:
        """First ``take`` entries of a uniform permutation of range(n).

        Partial Fisher-Yates: draws exactly ``take`` integers from the
        stream, so the cost does not depend on how much of the permutation
        is discarded.
        """
        if not 0 <= take <= n:
            raise ValueError("take must be in [0, n]")
        items = list(range(n))
        for i in range(take):
            j = i + self.randbelow(n - i)
            items[i], items[j] = items[j], items[i]
        return items[:take]
