"""SplitMix64 byte source used for protocol input vectors and session ids.

The protocol ships inputs in full, so this generator only has to be
reproducible, not shared. A hand-rolled 64-bit generator keeps transcripts
identical across numpy versions and platforms.
"""

from __future__ import annotations

import os

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int | None = None):
        if seed is None:
            seed = int.from_bytes(os.urandom(8), "big")
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random_bytes(self, n: int) -> bytes:
        words = -(-n // 8)
        out = b"".join(self.next_u64().to_bytes(8, "big") for _ in range(words))
        return out[:n]
