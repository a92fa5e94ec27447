"""Masked-LM answer selection over a candidate vocabulary.

The scorer contract is pluggable: an in-process deterministic mock keeps
the whole pipeline hermetic, and an HTTP client delegates to an external
encoder/LM service speaking the JSON wire protocol.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import httpx
import numpy as np

from .errors import BackendError, TransportError, ValidationError
from .hashing import text_stream
from .prompting import MASK_SENTINEL, AnswerPrompt, render_for_scorer, with_mask_count

MOCK_SCORE_DIM = 64


class Scorer:
    """Contract: batch log-probabilities at the mask position(s).

    ``score`` returns one finite float per candidate; ``count_tokens``
    must be monotone under concatenation; ``mask_surface_form`` is the
    literal mask token the backend expects in the prompt text.
    """

    mask_surface_form: str = MASK_SENTINEL

    def score(
        self, prompt_text: str, candidates: Sequence[str], mask_count: int = 1
    ) -> list[float]:
        raise NotImplementedError

    def count_tokens(self, text: str) -> int:
        raise NotImplementedError


def mock_embed(text: str, dim: int) -> np.ndarray:
    """Deterministic unit vector derived from the text bytes alone.

    FNV-1a 64 seeds a splitmix64 stream; each component is a uniform
    draw mapped to [-1, 1); the vector is L2-normalized in float64 and
    returned as float32. Identical text gives identical bytes on every
    platform.
    """
    if dim < 1:
        raise ValidationError("embedding dim must be at least 1")
    stream = text_stream(text)
    raw = [stream.next_unit() * 2.0 - 1.0 for _ in range(dim)]
    norm = math.sqrt(math.fsum(c * c for c in raw))
    return np.asarray([c / norm for c in raw], dtype=np.float32)


def _exact_cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Platform-stable cosine: exactly-rounded float64 sums via fsum."""
    dot = math.fsum(float(x) * float(y) for x, y in zip(a, b))
    na = math.sqrt(math.fsum(float(x) * float(x) for x in a))
    nb = math.sqrt(math.fsum(float(y) * float(y) for y in b))
    return dot / (na * nb)


def mock_score(prompt_text: str, candidates: Sequence[str]) -> list[float]:
    """Cosine of mock embeddings mapped through log((s + 1) / 2 + 1e-9)."""
    if not candidates:
        raise ValidationError("candidate list must be non-empty")
    p = mock_embed(prompt_text, MOCK_SCORE_DIM)
    out = []
    for candidate in candidates:
        c = mock_embed(candidate, MOCK_SCORE_DIM)
        s = _exact_cosine(p, c)
        out.append(math.log((s + 1.0) / 2.0 + 1e-9))
    return out


class MockScorer(Scorer):
    """Hermetic scorer: hash-based embeddings, whitespace token counts."""

    mask_surface_form = "[MASK]"

    def score(
        self, prompt_text: str, candidates: Sequence[str], mask_count: int = 1
    ) -> list[float]:
        return mock_score(prompt_text, candidates)

    def count_tokens(self, text: str) -> int:
        return len(text.split())


@dataclass(frozen=True)
class CandidateSet:
    """Distinct non-empty answer strings forming the closed vocabulary."""

    answers: tuple[str, ...]

    def __post_init__(self):
        seen = set()
        for answer in self.answers:
            normalized = " ".join(answer.lower().split())
            if not normalized:
                raise ValidationError("candidate answers must be non-empty")
            if normalized in seen:
                raise ValidationError(f"duplicate candidate after normalization: {answer!r}")
            seen.add(normalized)

    def __len__(self) -> int:
        return len(self.answers)


@dataclass(frozen=True)
class AnswerResult:
    answer: str
    log_prob: float
    all_scores: tuple[tuple[str, float], ...]


def select_answer(
    prompt: AnswerPrompt, candidates: CandidateSet, scorer: Scorer
) -> AnswerResult:
    """Argmax candidate by mask log-probability; list order breaks ties.

    Candidates are grouped by their token count so each group is scored
    in one batch call against a prompt carrying that many masks.
    """
    if len(candidates) == 0:
        raise ValidationError("candidate set must be non-empty")
    groups: dict[int, list[int]] = {}
    for pos, answer in enumerate(candidates.answers):
        width = scorer.count_tokens(answer)
        if width < 1:
            raise ValidationError(f"candidate {answer!r} tokenizes to zero tokens")
        groups.setdefault(width, []).append(pos)

    scores: list[float | None] = [None] * len(candidates)
    for width in sorted(groups):
        positions = groups[width]
        text = render_for_scorer(with_mask_count(prompt, width), scorer.mask_surface_form)
        batch = [candidates.answers[p] for p in positions]
        values = scorer.score(text, batch, mask_count=width)
        if len(values) != len(batch):
            raise BackendError(
                f"scorer returned {len(values)} scores for {len(batch)} candidates"
            )
        for pos, value in zip(positions, values):
            value = float(value)
            if not math.isfinite(value):
                raise BackendError(f"scorer returned non-finite score {value!r}")
            scores[pos] = value

    best = max(range(len(candidates)), key=lambda p: scores[p])
    all_scores = tuple(zip(candidates.answers, scores))
    return AnswerResult(
        answer=candidates.answers[best], log_prob=scores[best], all_scores=all_scores
    )


class HttpScorer(Scorer):
    """Client for the encoder/LM adapter's JSON-over-HTTP protocol.

    Requests are pure lookups, so transport failures and 5xx responses
    are retried with exponential backoff up to ``max_retries``.
    """

    def __init__(
        self,
        endpoint: str,
        mask_surface_form: str = "[MASK]",
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff: float = 0.25,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.mask_surface_form = mask_surface_form
        self.max_retries = max_retries
        self.backoff = backoff
        self._client = httpx.Client(base_url=self.endpoint, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                response = self._client.request(method, path, json=payload)
            except httpx.HTTPError as exc:
                last_error = TransportError(f"{method} {self.endpoint}{path}: {exc}")
                continue
            if response.status_code >= 500:
                last_error = BackendError(
                    f"{method} {path}: HTTP {response.status_code}: {response.text[:200]}"
                )
                continue
            if not 200 <= response.status_code < 300:
                raise BackendError(
                    f"{method} {path}: HTTP {response.status_code}: {response.text[:200]}"
                )
            return response.json()
        raise last_error

    def score(
        self, prompt_text: str, candidates: Sequence[str], mask_count: int = 1
    ) -> list[float]:
        body = self._request(
            "POST",
            "/v1/score",
            {"prompt": prompt_text, "mask_count": mask_count, "candidates": list(candidates)},
        )
        return [float(v) for v in body["log_probs"]]

    def count_tokens(self, text: str) -> int:
        return int(self._request("POST", "/v1/count_tokens", {"text": text})["count"])

    def embed_text(self, texts: Sequence[str]) -> np.ndarray:
        body = self._request("POST", "/v1/embed_text", {"texts": list(texts)})
        return np.asarray(body["embeddings"], dtype=np.float32).reshape(len(texts), body["dim"])

    def embed_frames(self, video_id: str, frames_path: str, num_frames: int) -> np.ndarray:
        body = self._request(
            "POST",
            "/v1/embed_frames",
            {"video_id": video_id, "frames_path": frames_path, "num_frames": num_frames},
        )
        return np.asarray(body["embeddings"], dtype=np.float32).reshape(num_frames, body["dim"])

    def health(self) -> dict:
        return self._request("GET", "/health")


def http_scorer(endpoint: str, **kwargs) -> HttpScorer:
    return HttpScorer(endpoint, **kwargs)
