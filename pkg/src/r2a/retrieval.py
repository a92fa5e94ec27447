"""Exact per-frame top-k cosine retrieval over a corpus index.

Scores are plain dot products because index rows and query vectors are
unit-normalized. Each shard is scanned with a float32 einsum whose
per-row result depends only on the row bytes, so retrieval output is
bit-identical for any shard layout or thread count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import NORM_TOLERANCE, ZERO_NORM_THRESHOLD, CorpusIndex, TextCorpus
from .errors import ValidationError
from .hashing import SplitMix64

SCORE_SLACK = 1e-5


@dataclass
class FrameFeatures:
    """Per-frame embeddings for one video: L x d float32."""

    video_id: str
    frames: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValidationError("frame features must be a non-empty 2-D matrix")
        if not np.all(np.isfinite(frames)):
            raise ValidationError(f"frame features for {self.video_id!r} contain NaN or infinity")
        self.frames = frames
        if self.normalized:
            norms = np.sqrt(np.einsum("ij,ij->i", frames, frames, dtype=np.float64))
            if np.max(np.abs(norms - 1.0)) > NORM_TOLERANCE:
                raise ValidationError(f"frames for {self.video_id!r} flagged normalized but are not")

    @property
    def count(self) -> int:
        return int(self.frames.shape[0])

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])


@dataclass(frozen=True)
class Hit:
    corpus_id: int
    score: float
    rank: int


@dataclass(frozen=True)
class VideoRetrieval:
    """One hit list per frame, each sorted by (score desc, corpus_id asc)."""

    per_frame: tuple[tuple[Hit, ...], ...]
    k: int


def similarity(z: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity z.v / (|z||v|), computed in float64."""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if z.shape != v.shape:
        raise ValidationError(f"dimension mismatch: {z.shape[0]} vs {v.shape[0]}")
    nz = float(np.linalg.norm(z))
    nv = float(np.linalg.norm(v))
    if nz < ZERO_NORM_THRESHOLD or nv < ZERO_NORM_THRESHOLD:
        raise ValidationError("similarity is undefined for zero-norm vectors")
    return float(np.dot(z, v) / (nz * nv))


def _normalize_query(z: np.ndarray, dim: int) -> np.ndarray:
    z = np.ascontiguousarray(z, dtype=np.float32).reshape(-1)
    if z.shape[0] != dim:
        raise ValidationError(f"query dim {z.shape[0]} does not match index dim {dim}")
    norm = float(np.sqrt(np.einsum("i,i->", z, z, dtype=np.float64)))
    if norm < ZERO_NORM_THRESHOLD:
        raise ValidationError("query vector has near-zero norm")
    if abs(norm - 1.0) > NORM_TOLERANCE:
        z = z / np.float32(norm)
    return z


def _shard_candidates(
    vectors: np.ndarray, start: int, end: int, z: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Top-k (ids, scores) of one shard under the (score desc, id asc) order."""
    rows = vectors[start:end]
    scores = np.einsum("ij,j->i", rows, z)
    n = scores.shape[0]
    if k >= n:
        idx = np.arange(n)
    else:
        part = np.argpartition(scores, n - k)[n - k :]
        kth = scores[part].min()
        above = np.nonzero(scores > kth)[0]
        # nonzero yields ascending indices, so boundary ties resolve to low ids
        tied = np.nonzero(scores == kth)[0]
        idx = np.concatenate([above, tied[: k - above.size]])
    return idx + start, scores[idx]


def topk_frame(index: CorpusIndex, z: np.ndarray, k: int, threads: int = 1) -> tuple[Hit, ...]:
    """The min(k, N) most similar corpus entries for one frame vector."""
    if k <= 0:
        raise ValidationError("k must be a positive integer")
    if index.count == 0:
        raise ValidationError("cannot query an empty index")
    z = _normalize_query(z, index.dim)
    vectors = index.embeddings.values

    if threads > 1 and len(index.shards) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(lambda se: _shard_candidates(vectors, se[0], se[1], z, k), index.shards)
            )
    else:
        parts = [_shard_candidates(vectors, s, e, z, k) for s, e in index.shards]

    ids = np.concatenate([p[0] for p in parts])
    scores = np.concatenate([p[1] for p in parts])
    # global order: score descending, corpus_id ascending
    order = np.lexsort((ids, -scores.astype(np.float64)))[: min(k, index.count)]
    hits = []
    for rank, j in enumerate(order, start=1):
        score = float(scores[j])
        if not -1.0 - SCORE_SLACK <= score <= 1.0 + SCORE_SLACK:
            raise ValidationError(f"similarity {score} outside [-1, 1] tolerance")
        hits.append(Hit(corpus_id=int(ids[j]), score=score, rank=rank))
    return tuple(hits)


def retrieve_video(
    index: CorpusIndex, frames: FrameFeatures, k: int, threads: int = 1
) -> VideoRetrieval:
    """Run topk_frame for every frame, in frame order."""
    if frames.dim != index.dim:
        raise ValidationError(f"frame dim {frames.dim} does not match index dim {index.dim}")
    if threads > 1 and frames.count > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            lists = list(pool.map(lambda row: topk_frame(index, row, k), frames.frames))
    else:
        lists = [topk_frame(index, row, k) for row in frames.frames]
    return VideoRetrieval(per_frame=tuple(lists), k=k)


def dedup_captions(r: VideoRetrieval, corpus: TextCorpus) -> list[tuple[int, str]]:
    """Distinct retrieved texts in first-occurrence order.

    Traverses frames in order and hits by rank; each distinct text string
    is emitted once, tagged with the 1-based frame where it first appeared.
    """
    seen: set[str] = set()
    out: list[tuple[int, str]] = []
    for frame_pos, hits in enumerate(r.per_frame, start=1):
        for hit in hits:
            text = corpus.text(hit.corpus_id)
            if text not in seen:
                seen.add(text)
                out.append((frame_pos, text))
    return out


def random_sample(corpus: TextCorpus, k: int, seed: int) -> list[str]:
    """k distinct corpus texts drawn uniformly without replacement, seeded."""
    n = len(corpus)
    if k < 0 or k > n:
        raise ValidationError(f"cannot sample {k} entries from a corpus of {n}")
    stream = SplitMix64(seed)
    ids = list(range(n))
    for i in range(k):
        j = i + stream.next_below(n - i)
        ids[i], ids[j] = ids[j], ids[i]
    return [corpus.text(i) for i in ids[:k]]


def retrieval_to_jsonl(r: VideoRetrieval, corpus: TextCorpus) -> str:
    """One JSON object per frame: {"frame": t, "hits": [{id, score, text}]}."""
    lines = []
    for frame_pos, hits in enumerate(r.per_frame, start=1):
        payload = {
            "frame": frame_pos,
            "hits": [
                {"id": h.corpus_id, "score": h.score, "text": corpus.text(h.corpus_id)}
                for h in hits
            ],
        }
        lines.append(json.dumps(payload, ensure_ascii=False))
    return "\n".join(lines) + ("\n" if lines else "")
