"""Uniform temporal frame sampling."""

from __future__ import annotations


def uniform_frame_indices(total_frames: int, num_samples: int) -> list[int]:
    """Center-offset uniform sampling: index i -> floor((i + 0.5) * T / L).

    Fixed so that an identical video always yields identical frames;
    T=10, L=10 gives 0..9 and T=100, L=10 gives 5, 15, ..., 95.
    """
    if total_frames < 1:
        raise ValueError("total_frames must be at least 1")
    if num_samples < 1:
        raise ValueError("num_samples must be at least 1")
    return [int((i + 0.5) * total_frames / num_samples) for i in range(num_samples)]
