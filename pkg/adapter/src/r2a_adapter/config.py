"""Adapter runtime configuration."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class AdapterConfig:
    backend: str = "mock"  # "mock" or "real"
    vision_model: str = "openai/clip-vit-large-patch14"
    language_model: str = "microsoft/deberta-v2-xlarge"
    device: str = "cpu"
    host: str = "127.0.0.1"
    port: int = 8091
    max_batch: int = 256
    mock_dim: int = 64

    def __post_init__(self):
        if self.backend not in ("mock", "real"):
            raise ValueError(f"backend must be 'mock' or 'real', got {self.backend!r}")
        if self.max_batch < 1:
            raise ValueError("max_batch must be at least 1")
        if self.mock_dim < 1:
            raise ValueError("mock_dim must be at least 1")
