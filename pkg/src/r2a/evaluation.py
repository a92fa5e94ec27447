"""Dataset loading, pipeline evaluation, and exact-match accuracy.

A run walks every QA record through retrieve -> dedup -> context ->
prompt -> truncate -> select_answer and counts top-1 exact matches,
with per-answer-type breakdowns and an optional random-sampling
baseline for ablation comparisons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .answering import CandidateSet, Scorer, select_answer
from .corpus import CorpusIndex
from .errors import R2AError, ValidationError
from .hashing import fnv1a64
from .prompting import DEFAULT_PROMPT_WORD, build_answer_prompt, build_context, truncate_to_budget
from .retrieval import FrameFeatures, dedup_captions, random_sample, retrieve_video


@dataclass(frozen=True)
class QARecord:
    video_id: str
    question: str
    answer: str
    answer_type: str | None = None

    def __post_init__(self):
        if not self.video_id:
            raise ValidationError("record video_id must be non-empty")
        if not self.question.strip():
            raise ValidationError(f"record {self.video_id!r} has an empty question")


@dataclass(frozen=True)
class ItemResult:
    video_id: str
    question: str
    prediction: str | None
    gold: str
    correct: bool


@dataclass
class TypeStats:
    total: int = 0
    correct: int = 0

    @property
    def accuracy(self) -> float | None:
        return self.correct / self.total if self.total else None


@dataclass
class EvalReport:
    total: int
    correct: int
    accuracy: float | None
    per_type: dict[str, TypeStats]
    per_item: list[ItemResult] | None = None
    errors: list[tuple[str, str]] = field(default_factory=list)


def normalize_answer(s: str) -> str:
    """Lowercase, trim outer whitespace, collapse inner runs to one space."""
    return " ".join(s.lower().split())


def exact_match(pred: str, gold: str) -> bool:
    return normalize_answer(pred) == normalize_answer(gold)


FramesSource = Mapping[str, FrameFeatures] | Callable[[str], FrameFeatures]


def _resolve_frames(frames: FramesSource, video_id: str) -> FrameFeatures:
    if callable(frames):
        return frames(video_id)
    if video_id not in frames:
        raise ValidationError(f"no frame features for video {video_id!r}")
    return frames[video_id]


def run_pipeline(
    question: str,
    index: CorpusIndex,
    frames: FrameFeatures | None,
    candidates: CandidateSet,
    scorer: Scorer,
    k: int = 10,
    prompt_word: str = DEFAULT_PROMPT_WORD,
    token_budget: int = 500,
    mask_count: int = 1,
    baseline_seed: int | None = None,
    threads: int = 1,
):
    """One question end to end; returns (AnswerResult, AnswerPrompt).

    With ``baseline_seed`` set, retrieval is replaced by a seeded uniform
    sample of the corpus, positioned as a synthetic caption sequence.
    """
    if baseline_seed is not None:
        sampled = random_sample(index.corpus, min(k, len(index.corpus)), baseline_seed)
        tagged = [(i + 1, text) for i, text in enumerate(sampled)]
        total = max(len(sampled), 1)
    else:
        if frames is None:
            raise ValidationError("frame features are required when retrieval is enabled")
        result = retrieve_video(index, frames, k, threads=threads)
        tagged = dedup_captions(result, index.corpus)
        total = frames.count
    prompt = build_answer_prompt(question, build_context(tagged, total), prompt_word, mask_count)
    prompt = truncate_to_budget(prompt, token_budget, scorer.count_tokens)
    return select_answer(prompt, candidates, scorer), prompt


def evaluate(
    records: Sequence[QARecord],
    index: CorpusIndex,
    frames: FramesSource,
    candidates: CandidateSet,
    scorer: Scorer,
    k: int = 10,
    prompt_word: str = DEFAULT_PROMPT_WORD,
    token_budget: int = 500,
    mask_count: int = 1,
    strict: bool = False,
    fail_fast: bool = False,
    collect_items: bool = True,
    baseline: str | None = None,
    seed: int = 0,
    threads: int = 1,
) -> EvalReport:
    """Top-1 exact-match accuracy over a record set.

    Per-record failures count as incorrect and are collected in the
    report unless ``fail_fast``. ``baseline="random"`` swaps retrieval
    for seeded random sampling; the per-record seed is derived from the
    record content so results are invariant to record order.
    """
    if baseline not in (None, "random"):
        raise ValidationError(f"unknown baseline {baseline!r}")
    correct = 0
    per_type: dict[str, TypeStats] = {}
    items: list[ItemResult] = []
    errors: list[tuple[str, str]] = []
    for record in records:
        prediction: str | None = None
        try:
            baseline_seed = None
            if baseline == "random":
                baseline_seed = fnv1a64(f"{seed}:{record.video_id}:{record.question}".encode())
            result, _ = run_pipeline(
                record.question,
                index,
                _resolve_frames(frames, record.video_id) if baseline is None else None,
                candidates,
                scorer,
                k=k,
                prompt_word=prompt_word,
                token_budget=token_budget,
                mask_count=mask_count,
                baseline_seed=baseline_seed,
                threads=threads,
            )
            prediction = result.answer
            if strict:
                is_correct = prediction == record.answer
            else:
                is_correct = exact_match(prediction, record.answer)
        except (R2AError, KeyError) as exc:
            if fail_fast:
                raise
            errors.append((record.video_id, str(exc)))
            is_correct = False
        correct += is_correct
        if record.answer_type is not None:
            stats = per_type.setdefault(record.answer_type, TypeStats())
            stats.total += 1
            stats.correct += is_correct
        if collect_items:
            items.append(
                ItemResult(
                    video_id=record.video_id,
                    question=record.question,
                    prediction=prediction,
                    gold=record.answer,
                    correct=is_correct,
                )
            )
    total = len(records)
    return EvalReport(
        total=total,
        correct=correct,
        accuracy=correct / total if total else None,
        per_type=per_type,
        per_item=items if collect_items else None,
        errors=errors,
    )


@dataclass
class RunDelta:
    """Accuracy movement from run A to run B over the same records."""

    overall_delta: float
    per_type_deltas: dict[str, float]
    flipped: int
    a_accuracy: float | None
    b_accuracy: float | None


def compare_runs(report_a: EvalReport, report_b: EvalReport) -> RunDelta:
    """Per-type and overall accuracy deltas (B minus A) plus flip count."""
    if report_a.per_item is None or report_b.per_item is None:
        raise ValidationError("compare_runs needs reports with per_item results")
    key = lambda item: (item.video_id, item.question)
    a_items = {key(item): item for item in report_a.per_item}
    b_items = {key(item): item for item in report_b.per_item}
    if set(a_items) != set(b_items):
        raise ValidationError("reports cover different record sets")
    flipped = sum(1 for k in a_items if a_items[k].correct != b_items[k].correct)
    types = set(report_a.per_type) | set(report_b.per_type)
    per_type_deltas = {
        t: (_acc(report_b.per_type.get(t)) or 0.0) - (_acc(report_a.per_type.get(t)) or 0.0)
        for t in sorted(types)
    }
    return RunDelta(
        overall_delta=(report_b.accuracy or 0.0) - (report_a.accuracy or 0.0),
        per_type_deltas=per_type_deltas,
        flipped=flipped,
        a_accuracy=report_a.accuracy,
        b_accuracy=report_b.accuracy,
    )


def _acc(stats: TypeStats | None) -> float | None:
    return stats.accuracy if stats is not None else None


def report_to_json(report: EvalReport, include_items: bool = True) -> str:
    """Deterministic JSON document for an EvalReport."""
    payload = {
        "total": report.total,
        "correct": report.correct,
        "accuracy": report.accuracy,
        "per_type": {
            t: {"total": s.total, "correct": s.correct, "accuracy": s.accuracy}
            for t, s in report.per_type.items()
        },
        "errors": [{"video_id": v, "message": m} for v, m in report.errors],
    }
    if include_items and report.per_item is not None:
        payload["per_item"] = [
            {
                "video_id": item.video_id,
                "question": item.question,
                "prediction": item.prediction,
                "gold": item.gold,
                "correct": item.correct,
            }
            for item in report.per_item
        ]
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2)


def load_dataset(path) -> list[QARecord]:
    """JSONL dataset: {"video_id", "question", "answer", "type"?} per line."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"dataset line {lineno}: invalid JSON ({exc.msg})") from exc
            records.append(
                QARecord(
                    video_id=row["video_id"],
                    question=row["question"],
                    answer=row["answer"],
                    answer_type=row.get("type"),
                )
            )
    return records


def load_frames_manifest(path) -> dict[str, dict]:
    """JSONL manifest: {"video_id", "path", "num_frames"} per line."""
    manifest: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"manifest line {lineno}: invalid JSON ({exc.msg})") from exc
            manifest[row["video_id"]] = row
    return manifest
