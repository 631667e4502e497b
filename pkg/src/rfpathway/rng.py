"""Portable seeded random streams.

xoshiro256++ supplies every random draw in the package (bootstrap indices,
column subsampling, synthetic noise). Generator states are seeded through
splitmix64, and independent streams are derived by hashing a tuple of
identifiers, so a stream depends only on *what* it is for and never on the
order in which workers ask for it.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
_INV_2_53 = 1.0 / (1 << 53)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64(x: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


def derive_seed(*parts: int | str) -> int:
    """Hash a tuple of ints/strings into a 64-bit seed.

    The encoding is length-prefixed so ``("ab", "c")`` and ``("a", "bc")``
    map to different seeds.
    """
    h = hashlib.blake2b(digest_size=8, person=b"rfpathway")
    for part in parts:
        if isinstance(part, str):
            raw = part.encode("utf-8")
            h.update(b"s" + struct.pack("<Q", len(raw)) + raw)
        else:
            h.update(b"i" + struct.pack("<Q", int(part) & MASK64))
    return struct.unpack("<Q", h.digest())[0]


class Xoshiro256pp:
    """xoshiro256++ generator (Blackman & Vigna) in plain Python integers."""

    def __init__(self, seed: int):
        sm = int(seed) & MASK64
        state = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            state.append(out)
        if not any(state):  # all-zero state is a fixed point
            state[0] = 1
        self.s = state

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl((s0 + s3) & MASK64, 23) + s0) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def integers(self, n: int, size: int) -> np.ndarray:
        """``size`` draws uniform on ``{0, ..., n-1}`` via the 53-bit float path."""
        out = np.empty(size, dtype=np.int64)
        for i in range(size):
            out[i] = int(self.random() * n)
        return out

    def state(self) -> tuple[int, int, int, int]:
        return tuple(self.s)


def noise_stream(seed: int, count: int, half_width: float = 0.5) -> np.ndarray:
    """``count`` i.i.d. draws uniform on ``[-half_width, half_width)``."""
    if half_width < 0:
        raise ValueError("half_width must be nonnegative")
    gen = Xoshiro256pp(seed)
    return np.array([gen.uniform(-half_width, half_width) for _ in range(count)], dtype=float)
