"""Embedding and scoring backends behind a single interface.

The mock backend is pure and deterministic; the real backend wraps a
CLIP-style vision-language encoder and a BERT-style masked LM loaded
lazily from the transformers hub. All embedding methods return
unit-normalized float32 rows.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import hashmock
from .config import AdapterConfig
from .sampling import uniform_frame_indices


class BackendError(Exception):
    """Raised when the wrapped models cannot serve a request."""


class Backend:
    name: str = "abstract"

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        raise NotImplementedError

    def embed_frames(self, video_id: str, frames_path: str, num_frames: int) -> np.ndarray:
        raise NotImplementedError

    def score(self, prompt: str, mask_count: int, candidates: Sequence[str]) -> list[float]:
        raise NotImplementedError

    def count_tokens(self, text: str) -> int:
        raise NotImplementedError


class MockBackend(Backend):
    """Hash-based deterministic backend; needs no models or media files."""

    name = "mock"

    def __init__(self, config: AdapterConfig):
        self.dim = config.mock_dim

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([hashmock.embed(text, self.dim) for text in texts])

    def embed_frames(self, video_id: str, frames_path: str, num_frames: int) -> np.ndarray:
        rows = [hashmock.embed(f"{video_id}:{i}", self.dim) for i in range(num_frames)]
        return np.stack(rows)

    def score(self, prompt: str, mask_count: int, candidates: Sequence[str]) -> list[float]:
        return hashmock.score(prompt, candidates)

    def count_tokens(self, text: str) -> int:
        return hashmock.count_tokens(text)


class RealBackend(Backend):
    """CLIP + masked-LM backend; models load once at startup.

    Multi-mask candidates are scored as the mean per-token log-prob at
    the mask positions.
    """

    name = "clip+deberta"

    def __init__(self, config: AdapterConfig):
        self.config = config
        try:
            import torch
            from transformers import (
                AutoModelForMaskedLM,
                AutoProcessor,
                AutoTokenizer,
                CLIPModel,
            )
        except ImportError as exc:
            raise BackendError(
                f"real backend requires torch and transformers: {exc}"
            ) from exc
        self._torch = torch
        device = config.device
        try:
            self.clip = CLIPModel.from_pretrained(config.vision_model).to(device).eval()
            self.processor = AutoProcessor.from_pretrained(config.vision_model)
            self.tokenizer = AutoTokenizer.from_pretrained(config.language_model)
            self.lm = AutoModelForMaskedLM.from_pretrained(config.language_model).to(device).eval()
        except Exception as exc:  # model resolution/download/load failures
            raise BackendError(f"failed to load backend models: {exc}") from exc
        self.device = device

    @staticmethod
    def _normalize(rows: np.ndarray) -> np.ndarray:
        rows = rows.astype(np.float32)
        norms = np.sqrt(np.einsum("ij,ij->i", rows, rows, dtype=np.float64))
        return rows / norms[:, None].astype(np.float32)

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        torch = self._torch
        inputs = self.processor(
            text=list(texts), return_tensors="pt", padding=True, truncation=True
        ).to(self.device)
        with torch.no_grad():
            features = self.clip.get_text_features(**inputs)
        return self._normalize(features.cpu().numpy())

    def embed_frames(self, video_id: str, frames_path: str, num_frames: int) -> np.ndarray:
        frames = self._decode_frames(frames_path, num_frames)
        torch = self._torch
        inputs = self.processor(images=frames, return_tensors="pt").to(self.device)
        with torch.no_grad():
            features = self.clip.get_image_features(**inputs)
        return self._normalize(features.cpu().numpy())

    def _decode_frames(self, frames_path: str, num_frames: int):
        try:
            import cv2
        except ImportError as exc:
            raise BackendError(f"video decoding requires opencv: {exc}") from exc
        capture = cv2.VideoCapture(frames_path)
        if not capture.isOpened():
            raise BackendError(f"cannot open video {frames_path!r}")
        total = int(capture.get(cv2.CAP_PROP_FRAME_COUNT))
        if total < 1:
            capture.release()
            raise BackendError(f"video {frames_path!r} has no decodable frames")
        frames = []
        for index in uniform_frame_indices(total, num_frames):
            capture.set(cv2.CAP_PROP_POS_FRAMES, index)
            ok, frame = capture.read()
            if not ok:
                capture.release()
                raise BackendError(f"failed to decode frame {index} of {frames_path!r}")
            frames.append(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))
        capture.release()
        return frames

    def count_tokens(self, text: str) -> int:
        return len(self.tokenizer.encode(text, add_special_tokens=False))

    def score(self, prompt: str, mask_count: int, candidates: Sequence[str]) -> list[float]:
        torch = self._torch
        tokenizer = self.tokenizer
        inputs = tokenizer(prompt, return_tensors="pt", truncation=True).to(self.device)
        mask_token_id = tokenizer.mask_token_id
        positions = (inputs["input_ids"][0] == mask_token_id).nonzero(as_tuple=True)[0]
        if positions.numel() != mask_count:
            raise BackendError(
                f"prompt contains {positions.numel()} mask tokens, expected {mask_count}"
            )
        with torch.no_grad():
            logits = self.lm(**inputs).logits[0]
        log_probs = torch.log_softmax(logits[positions], dim=-1)
        values = []
        for candidate in candidates:
            ids = tokenizer.encode(candidate, add_special_tokens=False)
            if len(ids) != mask_count:
                raise BackendError(
                    f"candidate {candidate!r} spans {len(ids)} tokens, expected {mask_count}"
                )
            per_token = [float(log_probs[j, token]) for j, token in enumerate(ids)]
            values.append(math.fsum(per_token) / len(per_token))
        return values


def make_backend(config: AdapterConfig) -> Backend:
    if config.backend == "mock":
        return MockBackend(config)
    return RealBackend(config)
