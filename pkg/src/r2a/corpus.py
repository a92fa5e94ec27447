"""Caption corpus ingestion and the on-disk embedding index.

An index is a directory holding two files: a binary vector file
(``vectors.r2av``) that must round-trip bit-exactly, and a human-readable
JSONL text sidecar (``texts.jsonl``). Vector file layout, little-endian:

    bytes 0-3    magic ``R2AV``
    bytes 4-7    format version (u32)
    bytes 8-15   row count N (u64)
    bytes 16-19  dimension d (u32)
    bytes 20-23  flags (u32), bit 0 = rows are unit-normalized
    bytes 24-    N*d float32 values, row-major

The fixed 24-byte header keeps the payload memory-mappable.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, ValidationError

MAGIC = b"R2AV"
FORMAT_VERSION = 1
FLAG_NORMALIZED = 0x1

VECTORS_FILENAME = "vectors.r2av"
TEXTS_FILENAME = "texts.jsonl"
META_FILENAME = "meta.json"

_HEADER = struct.Struct("<4sIQII")

NORM_TOLERANCE = 1e-4
ZERO_NORM_THRESHOLD = 1e-12


@dataclass(frozen=True)
class TextCorpus:
    """Ordered caption corpus; entry ids are implicit 0..N-1."""

    texts: tuple[str, ...]
    skipped_lines: int = 0

    def __post_init__(self):
        for i, text in enumerate(self.texts):
            if not text.strip():
                raise ValidationError(f"corpus entry {i} is empty after trimming")

    def __len__(self) -> int:
        return len(self.texts)

    @property
    def entries(self) -> list[tuple[int, str]]:
        return list(enumerate(self.texts))

    def text(self, corpus_id: int) -> str:
        return self.texts[corpus_id]


def ingest_texts(lines: Iterable[str | bytes]) -> TextCorpus:
    """Build a corpus from raw lines: trim whitespace, skip empties.

    Byte lines are decoded as UTF-8; a decode failure reports the 1-based
    line number. Ids are assigned 0..N-1 in input order.
    """
    kept: list[str] = []
    skipped = 0
    for lineno, raw in enumerate(lines, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ValidationError(f"line {lineno}: invalid UTF-8 ({exc.reason})") from exc
        text = raw.strip()
        if text:
            kept.append(text)
        else:
            skipped += 1
    return TextCorpus(texts=tuple(kept), skipped_lines=skipped)


@dataclass
class EmbeddingMatrix:
    """N x d float32 row matrix, optionally unit-normalized."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ValidationError(f"embedding matrix must be 2-D, got {values.ndim}-D")
        if not np.all(np.isfinite(values)):
            bad = int(np.argwhere(~np.isfinite(values).all(axis=1))[0][0])
            raise ValidationError(f"row {bad} contains NaN or infinity")
        self.values = values
        if self.normalized and values.shape[0]:
            norms = _row_norms(values)
            worst = int(np.argmax(np.abs(norms - 1.0)))
            if abs(float(norms[worst]) - 1.0) > NORM_TOLERANCE:
                raise ValidationError(
                    f"row {worst} has norm {float(norms[worst]):.6g}, expected 1.0 "
                    f"within {NORM_TOLERANCE}"
                )

    @property
    def count(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])


def _row_norms(values: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", values, values, dtype=np.float64))


def normalize_rows(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Divide every row by its L2 norm; idempotent on normalized input."""
    values = m.values
    if values.shape[0] == 0:
        return EmbeddingMatrix(values=values.copy(), normalized=True)
    norms = _row_norms(values)
    small = np.nonzero(norms < ZERO_NORM_THRESHOLD)[0]
    if small.size:
        raise ValidationError(f"row {int(small[0])} has near-zero norm, cannot normalize")
    out = values / norms[:, None].astype(np.float32)
    return EmbeddingMatrix(values=out, normalized=True)


def make_shards(count: int, shard_count: int | None = None) -> tuple[tuple[int, int], ...]:
    """Contiguous half-open row ranges partitioning [0, count)."""
    if shard_count is None:
        shard_count = os.cpu_count() or 1
    if shard_count < 1:
        raise ValidationError("shard count must be at least 1")
    if count == 0:
        return ((0, 0),)
    shard_count = min(shard_count, count)
    base, extra = divmod(count, shard_count)
    shards = []
    start = 0
    for i in range(shard_count):
        end = start + base + (1 if i < extra else 0)
        shards.append((start, end))
        start = end
    return tuple(shards)


@dataclass(frozen=True)
class CorpusIndex:
    """Immutable retrieval index: texts + normalized embeddings + shard layout."""

    corpus: TextCorpus
    embeddings: EmbeddingMatrix
    shards: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if not self.embeddings.normalized:
            raise ValidationError("index embeddings must be normalized")
        if self.embeddings.count != len(self.corpus):
            raise ValidationError(
                f"embedding rows ({self.embeddings.count}) != corpus entries ({len(self.corpus)})"
            )
        shards = self.shards or make_shards(self.embeddings.count)
        object.__setattr__(self, "shards", tuple((int(s), int(e)) for s, e in shards))
        _check_partition(self.shards, self.embeddings.count)

    @property
    def count(self) -> int:
        return self.embeddings.count

    @property
    def dim(self) -> int:
        return self.embeddings.dim

    def with_shards(self, shard_count: int) -> "CorpusIndex":
        return CorpusIndex(
            corpus=self.corpus,
            embeddings=self.embeddings,
            shards=make_shards(self.count, shard_count),
        )


def _check_partition(shards: Sequence[tuple[int, int]], count: int) -> None:
    if not shards:
        raise ValidationError("shard list is empty")
    expected = 0
    for i, (start, end) in enumerate(shards):
        if start != expected or end < start:
            raise ValidationError(f"shard {i} ({start},{end}) does not partition [0,{count})")
        expected = end
    if expected != count:
        raise ValidationError(f"shards cover [0,{expected}), expected [0,{count})")


def build_index(
    corpus: TextCorpus,
    embeddings: EmbeddingMatrix,
    shard_count: int | None = None,
) -> CorpusIndex:
    """Normalize embeddings if needed and assemble an index."""
    if not embeddings.normalized:
        embeddings = normalize_rows(embeddings)
    return CorpusIndex(
        corpus=corpus,
        embeddings=embeddings,
        shards=make_shards(embeddings.count, shard_count),
    )


def write_vector_file(path: str | Path, matrix: EmbeddingMatrix) -> None:
    path = Path(path)
    flags = FLAG_NORMALIZED if matrix.normalized else 0
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, matrix.count, matrix.dim, flags)
    payload = np.ascontiguousarray(matrix.values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_vector_file(path: str | Path, mmap: bool = False) -> EmbeddingMatrix:
    """Load a vector file, validating magic, version, and payload size."""
    path = Path(path)
    file_size = path.stat().st_size
    if file_size < _HEADER.size:
        raise FormatError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    with open(path, "rb") as fh:
        magic, version, count, dim, flags = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}, expected {FORMAT_VERSION}")
    if dim == 0 and count > 0:
        raise FormatError(f"{path}: dim is 0 with count {count}")
    expected = _HEADER.size + count * dim * 4
    if file_size != expected:
        raise FormatError(
            f"{path}: payload size mismatch, header implies {expected} bytes, file has {file_size}"
        )
    shape = (int(count), int(dim))
    if mmap and count:
        values = np.memmap(path, dtype="<f4", mode="r", offset=_HEADER.size, shape=shape)
        values = np.asarray(values)
    else:
        with open(path, "rb") as fh:
            fh.seek(_HEADER.size)
            values = np.fromfile(fh, dtype="<f4").reshape(shape)
    return EmbeddingMatrix(values=values, normalized=bool(flags & FLAG_NORMALIZED))


def save_index(index: CorpusIndex, path: str | Path) -> None:
    """Persist an index into a directory (created if missing)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_vector_file(path / VECTORS_FILENAME, index.embeddings)
    with open(path / TEXTS_FILENAME, "w", encoding="utf-8") as fh:
        for i, text in enumerate(index.corpus.texts):
            fh.write(json.dumps({"id": i, "text": text}, ensure_ascii=False))
            fh.write("\n")
    with open(path / META_FILENAME, "w", encoding="utf-8") as fh:
        json.dump({"shards": [list(s) for s in index.shards]}, fh)
        fh.write("\n")


def load_index(
    path: str | Path,
    shard_count: int | None = None,
    mmap: bool = False,
) -> CorpusIndex:
    """Load an index directory; ``shard_count`` overrides the stored layout."""
    path = Path(path)
    embeddings = read_vector_file(path / VECTORS_FILENAME, mmap=mmap)
    texts: list[str] = []
    with open(path / TEXTS_FILENAME, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"texts line {lineno}: invalid JSON ({exc.msg})") from exc
            if record.get("id") != len(texts):
                raise FormatError(
                    f"texts line {lineno}: id {record.get('id')}, expected {len(texts)}"
                )
            texts.append(record["text"])
    if len(texts) != embeddings.count:
        raise FormatError(
            f"text count ({len(texts)}) does not match vector count ({embeddings.count})"
        )
    if shard_count is not None:
        shards = make_shards(embeddings.count, shard_count)
    else:
        shards = _load_meta_shards(path / META_FILENAME, embeddings.count)
    return CorpusIndex(corpus=TextCorpus(texts=tuple(texts)), embeddings=embeddings, shards=shards)


def _load_meta_shards(meta_path: Path, count: int) -> tuple[tuple[int, int], ...]:
    if not meta_path.exists():
        return make_shards(count)
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    return tuple((int(s), int(e)) for s, e in meta.get("shards", [])) or make_shards(count)
