"""Command-line surface: index building, retrieval, answering, eval, bench.

Machine-readable JSON/JSONL goes to stdout, logs to stderr. Flags win
over R2A_* environment variables, which win over defaults. Exit codes:
0 success, 1 I/O, 2 validation, 3 backend transport.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import corpus as corpus_store
from .answering import CandidateSet, HttpScorer, MockScorer, Scorer, mock_embed
from .errors import (
    BackendError,
    BudgetError,
    FormatError,
    TransportError,
    ValidationError,
)
from .evaluation import evaluate, load_dataset, load_frames_manifest, report_to_json
from .prompting import DEFAULT_PROMPT_WORD
from .retrieval import FrameFeatures, retrieval_to_jsonl, retrieve_video, topk_frame

ENV_PREFIX = "R2A_"


@dataclass
class RunConfig:
    """Resolved runtime knobs shared by the pipeline commands."""

    k: int = 10
    num_frames: int = 10
    prompt_word: str = DEFAULT_PROMPT_WORD
    token_budget: int = 500
    backend: str = "mock"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be at least 1")
        if self.num_frames < 1:
            raise ValidationError("num_frames must be at least 1")
        if self.token_budget < 16:
            raise ValidationError("token_budget must be at least 16")
        if self.threads < 1:
            raise ValidationError("threads must be at least 1")


def _env(name: str, cast, default):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError as exc:
        raise ValidationError(f"environment variable {ENV_PREFIX}{name}={raw!r}: {exc}") from exc


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Flags > R2A_* environment variables > defaults."""

    def pick(flag_value, env_name, cast, default):
        if flag_value is not None:
            return flag_value
        return _env(env_name, cast, default)

    return RunConfig(
        k=pick(getattr(args, "k", None), "K", int, 10),
        num_frames=pick(getattr(args, "num_frames", None), "NUM_FRAMES", int, 10),
        prompt_word=pick(getattr(args, "prompt_word", None), "PROMPT_WORD", str, DEFAULT_PROMPT_WORD),
        token_budget=pick(getattr(args, "token_budget", None), "TOKEN_BUDGET", int, 500),
        backend=pick(getattr(args, "scorer", None), "BACKEND", str, "mock"),
        seed=pick(getattr(args, "seed", None), "SEED", int, 0),
        threads=pick(getattr(args, "threads", None), "THREADS", int, 1),
    )


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def make_scorer(spec: str) -> Scorer:
    if spec == "mock":
        return MockScorer()
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpScorer(spec)
    raise ValidationError(f"unknown scorer backend {spec!r}, expected 'mock' or an http(s) URL")


def _load_embedding_file(path: Path) -> corpus_store.EmbeddingMatrix:
    """Accept either the native vector format or a .npy matrix."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == corpus_store.MAGIC:
        return corpus_store.read_vector_file(path)
    if head[:2] == b"\x93N":  # numpy magic \x93NUMPY
        return corpus_store.EmbeddingMatrix(values=np.load(path))
    raise FormatError(f"{path}: not a vector file or .npy matrix")


def _load_frames(path: Path, video_id: str | None = None) -> FrameFeatures:
    matrix = _load_embedding_file(path)
    return FrameFeatures(
        video_id=video_id or path.stem,
        frames=matrix.values,
        normalized=matrix.normalized,
    )


def _read_candidates(path: Path) -> CandidateSet:
    with open(path, encoding="utf-8") as fh:
        answers = tuple(line.strip() for line in fh if line.strip())
    return CandidateSet(answers=answers)


def cmd_build_index(args: argparse.Namespace) -> int:
    with open(args.texts, "rb") as fh:
        text_corpus = corpus_store.ingest_texts(fh.read().splitlines())
    if text_corpus.skipped_lines:
        _log(f"skipped {text_corpus.skipped_lines} empty lines")

    if args.embeddings is not None:
        matrix = _load_embedding_file(Path(args.embeddings))
        if matrix.count != len(text_corpus):
            raise ValidationError(
                f"row count mismatch: {matrix.count} embedding rows for "
                f"{len(text_corpus)} texts"
            )
    elif args.embed_with is not None:
        matrix = _embed_texts(args.embed_with, text_corpus.texts, args.dim)
    else:
        raise ValidationError("provide --embeddings FILE or --embed-with BACKEND")

    index = corpus_store.build_index(text_corpus, matrix, shard_count=args.shards)
    corpus_store.save_index(index, args.out)
    print(
        json.dumps(
            {"n": index.count, "dim": index.dim, "shards": [list(s) for s in index.shards]}
        )
    )
    return 0


def _embed_texts(backend: str, texts, dim: int) -> corpus_store.EmbeddingMatrix:
    if backend == "mock":
        if not texts:
            return corpus_store.EmbeddingMatrix(
                values=np.zeros((0, dim), dtype=np.float32), normalized=True
            )
        rows = np.stack([mock_embed(text, dim) for text in texts])
        return corpus_store.EmbeddingMatrix(values=rows, normalized=True)
    if backend.startswith("http://") or backend.startswith("https://"):
        client = HttpScorer(backend)
        try:
            rows = client.embed_text(list(texts))
        finally:
            client.close()
        return corpus_store.EmbeddingMatrix(values=rows, normalized=True)
    raise ValidationError(f"unknown embedding backend {backend!r}")


def cmd_retrieve(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    index = corpus_store.load_index(args.index)
    frames = _load_frames(Path(args.frames))
    result = retrieve_video(index, frames, cfg.k, threads=cfg.threads)
    sys.stdout.write(retrieval_to_jsonl(result, index.corpus))
    return 0


def cmd_answer(args: argparse.Namespace) -> int:
    from .evaluation import run_pipeline

    cfg = resolve_config(args)
    index = corpus_store.load_index(args.index)
    frames = _load_frames(Path(args.frames))
    candidates = _read_candidates(Path(args.candidates))
    scorer = make_scorer(cfg.backend)
    result, prompt = run_pipeline(
        args.question,
        index,
        frames,
        candidates,
        scorer,
        k=cfg.k,
        prompt_word=cfg.prompt_word,
        token_budget=cfg.token_budget,
        threads=cfg.threads,
    )
    _log(f"answer: {result.answer}")
    print(
        json.dumps(
            {
                "answer": result.answer,
                "log_prob": result.log_prob,
                "scores": [{"candidate": c, "log_prob": s} for c, s in result.all_scores],
                "prompt": prompt.rendered,
            },
            ensure_ascii=False,
        )
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    records = load_dataset(args.dataset)
    index = corpus_store.load_index(args.index)
    manifest = load_frames_manifest(args.frames_manifest)
    candidates = _read_candidates(Path(args.candidates))
    scorer = make_scorer(cfg.backend)

    def frames_for(video_id: str) -> FrameFeatures:
        if video_id not in manifest:
            raise ValidationError(f"video {video_id!r} missing from the frames manifest")
        row = manifest[video_id]
        frames = _load_frames(Path(row["path"]), video_id=video_id)
        if frames.count != int(row["num_frames"]):
            raise ValidationError(
                f"video {video_id!r}: manifest says {row['num_frames']} frames, "
                f"file has {frames.count}"
            )
        return frames

    report = evaluate(
        records,
        index,
        frames_for,
        candidates,
        scorer,
        k=cfg.k,
        prompt_word=cfg.prompt_word,
        token_budget=cfg.token_budget,
        strict=args.strict,
        fail_fast=args.fail_fast,
        baseline=args.baseline,
        seed=cfg.seed,
        threads=cfg.threads,
    )
    document = report_to_json(report)
    if args.report:
        Path(args.report).write_text(document + "\n", encoding="utf-8")
        _log(f"report written to {args.report}")
    print(json.dumps({"total": report.total, "correct": report.correct, "accuracy": report.accuracy}))
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if args.queries == 0:
        print(json.dumps({"queries": 0, "timings_ms": []}))
        return 0
    index = corpus_store.load_index(args.index, mmap=args.mmap)
    result = bench_index(
        index,
        queries=args.queries,
        k=cfg.k,
        threads=cfg.threads,
        repeat=args.repeat,
        seed=cfg.seed,
    )
    print(json.dumps(result))
    return 0


def bench_index(
    index: corpus_store.CorpusIndex,
    queries: int,
    k: int,
    threads: int = 1,
    repeat: int = 1,
    seed: int = 0,
) -> dict:
    """Measure per-query retrieval latency over seeded random unit queries."""
    rng = np.random.default_rng(seed)
    query_rows = rng.standard_normal((queries, index.dim)).astype(np.float32)
    norms = np.sqrt(np.einsum("ij,ij->i", query_rows, query_rows, dtype=np.float64))
    query_rows /= norms[:, None].astype(np.float32)

    timings: list[float] = []
    for _ in range(max(repeat, 1)):
        for row in query_rows:
            start = time.perf_counter()
            topk_frame(index, row, k, threads=threads)
            timings.append((time.perf_counter() - start) * 1000.0)
    timings_sorted = sorted(timings)
    p99 = timings_sorted[min(len(timings) - 1, int(len(timings) * 0.99))]
    total_seconds = sum(timings) / 1000.0
    return {
        "queries": queries,
        "repeat": max(repeat, 1),
        "k": k,
        "threads": threads,
        "n": index.count,
        "dim": index.dim,
        "median_ms": round(statistics.median(timings), 4),
        "p99_ms": round(p99, 4),
        "qps": round(len(timings) / total_seconds, 2) if total_seconds else None,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="r2a",
        description="Retrieval-augmented video question answering engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", help="encode/ingest a caption corpus into an index")
    p.add_argument("--texts", required=True, help="caption file, one caption per line")
    p.add_argument("--embeddings", help="precomputed embedding matrix (.r2av or .npy)")
    p.add_argument("--embed-with", dest="embed_with", help="'mock' or an adapter URL")
    p.add_argument("--dim", type=int, default=64, help="embedding dim for the mock backend")
    p.add_argument("--out", required=True, help="output index directory")
    p.add_argument("--shards", type=int, default=None)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("retrieve", help="per-frame top-k retrieval as JSONL")
    p.add_argument("--index", required=True)
    p.add_argument("--frames", required=True, help="frame feature vector file")
    p.add_argument("-k", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--format", choices=["jsonl"], default="jsonl")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("answer", help="answer one question about one video")
    p.add_argument("--index", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--candidates", required=True, help="candidate answers, one per line")
    p.add_argument("--scorer", default=None, help="'mock' or an adapter URL")
    p.add_argument("--prompt-word", dest="prompt_word", default=None)
    p.add_argument("-k", type=int, default=None)
    p.add_argument("--token-budget", dest="token_budget", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_answer)

    p = sub.add_parser("eval", help="evaluate a QA dataset end to end")
    p.add_argument("--dataset", required=True)
    p.add_argument("--frames-manifest", dest="frames_manifest", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--scorer", default=None)
    p.add_argument("--report", default=None, help="write the full report JSON here")
    p.add_argument("--baseline", choices=["random"], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-k", type=int, default=None)
    p.add_argument("--prompt-word", dest="prompt_word", default=None)
    p.add_argument("--token-budget", dest="token_budget", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--strict", action="store_true", help="disable answer normalization")
    p.add_argument("--fail-fast", dest="fail_fast", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="retrieval throughput benchmark")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("-k", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mmap", action="store_true", help="memory-map the vector file")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FormatError, BudgetError) as exc:
        _log(f"error: {exc}")
        return 2
    except (TransportError, BackendError) as exc:
        _log(f"backend error: {exc}")
        return 3
    except OSError as exc:
        _log(f"i/o error: {exc}")
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
