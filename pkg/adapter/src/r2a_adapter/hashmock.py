"""Deterministic mock embedding and scoring backend.

This is an independent implementation of the engine's hermetic mock
contract: FNV-1a 64 seeds a splitmix64 stream, components are uniform in
[-1, 1), vectors are L2-normalized in float64 via exactly-rounded sums
and stored as float32. Identical inputs must produce byte-identical
vectors to the engine's in-process mock on every platform.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

_M64 = 0xFFFFFFFFFFFFFFFF
SCORE_DIM = 64


def _fnv1a(data: bytes) -> int:
    acc = 0xCBF29CE484222325
    for byte in data:
        acc = ((acc ^ byte) * 0x100000001B3) & _M64
    return acc


def _splitmix(state: int):
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _M64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
        yield (z ^ (z >> 31)) & _M64


def embed(text: str, dim: int) -> np.ndarray:
    """Hash-derived float32 unit vector for one text."""
    if dim < 1:
        raise ValueError("dim must be at least 1")
    stream = _splitmix(_fnv1a(text.encode("utf-8")))
    raw = [(next(stream) / 2.0**64) * 2.0 - 1.0 for _ in range(dim)]
    norm = math.sqrt(math.fsum(c * c for c in raw))
    return np.asarray([c / norm for c in raw], dtype=np.float32)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    dot = math.fsum(float(x) * float(y) for x, y in zip(a, b))
    na = math.sqrt(math.fsum(float(x) * float(x) for x in a))
    nb = math.sqrt(math.fsum(float(y) * float(y) for y in b))
    return dot / (na * nb)


def score(prompt: str, candidates: Sequence[str]) -> list[float]:
    """log((cos(prompt, candidate) + 1) / 2 + 1e-9) per candidate."""
    anchor = embed(prompt, SCORE_DIM)
    values = []
    for candidate in candidates:
        s = _cosine(anchor, embed(candidate, SCORE_DIM))
        values.append(math.log((s + 1.0) / 2.0 + 1e-9))
    return values


def count_tokens(text: str) -> int:
    """Whitespace tokenization, the mock-mode token model."""
    return len(text.split())
