"""Deterministic 64-bit hashing and PRNG primitives.

Every seeded fixture in the engine (mock embeddings, token masking,
random sampling) is built on FNV-1a 64 seeding plus a splitmix64 stream
so that identical inputs reproduce identical bytes on any platform.
"""

from __future__ import annotations

_MASK64 = 0xFFFFFFFFFFFFFFFF
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15

TWO64 = float(2**64)


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of raw bytes."""
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


class SplitMix64:
    """splitmix64 stream; state advances by the golden-ratio gamma per draw."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _SPLITMIX_GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def next_unit(self) -> float:
        """Uniform float in [0, 1)."""
        return self.next_u64() / TWO64

    def next_below(self, bound: int) -> int:
        """Uniform integer in [0, bound). Modulo bias is negligible for bound << 2^64."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound


def text_stream(text: str) -> SplitMix64:
    """splitmix64 stream seeded with the FNV-1a hash of the UTF-8 text."""
    return SplitMix64(fnv1a64(text.encode("utf-8")))
