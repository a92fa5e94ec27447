"""Temporal-aware context assembly and the masked answer prompt.

Retrieved captions are stitched into natural language with ordering
connectives ("Firstly," ... "Finally,") and appended to a question
template ending in mask placeholders the language model fills in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import BudgetError, ValidationError

MASK_SENTINEL = "[MASK]"

DEFAULT_PROMPT_WORD = "Hints:"
PROMPT_WORD_CHOICES = ("Hints:", "Subtitles:", "Captions:", "Contexts:")

_TERMINAL_PUNCTUATION = (".", "!", "?")


def temporal_connective(position: int, total: int) -> str:
    """Ordering connective for a 1-based frame position out of ``total``."""
    if total < 1 or not 1 <= position <= total:
        raise ValidationError(f"position {position} out of range 1..{total}")
    if position == 1:
        return "Firstly,"
    if position == total:
        return "Finally,"
    if position == total - 1:
        return "After that,"
    return "Then,"


def _finish_sentence(caption: str) -> str:
    caption = caption.strip()
    if caption and not caption.endswith(_TERMINAL_PUNCTUATION):
        caption += "."
    return caption


@dataclass(frozen=True)
class VideoContext:
    """Connective-prefixed captions plus their single-string rendering.

    ``frame_indices`` keeps the source frame of each segment so the
    context can be rebuilt after truncation.
    """

    segments: tuple[tuple[str, str], ...]
    rendered: str
    frame_indices: tuple[int, ...]
    total_frames: int


def build_context(captions: Sequence[tuple[int, str]], total_frames: int) -> VideoContext:
    """Prefix each (frame_index, caption) with its connective and render.

    Frame indices must be non-decreasing and within 1..total_frames;
    captions keep their input order. An empty list renders to "".
    """
    if total_frames < 1:
        raise ValidationError("total_frames must be at least 1")
    segments: list[tuple[str, str]] = []
    indices: list[int] = []
    previous = 1
    for frame_index, caption in captions:
        if frame_index < previous or frame_index > total_frames:
            raise ValidationError(
                f"frame index {frame_index} not non-decreasing within 1..{total_frames}"
            )
        previous = frame_index
        segments.append((temporal_connective(frame_index, total_frames), caption))
        indices.append(frame_index)
    rendered = " ".join(f"{conn} {_finish_sentence(cap)}" for conn, cap in segments)
    return VideoContext(
        segments=tuple(segments),
        rendered=rendered,
        frame_indices=tuple(indices),
        total_frames=total_frames,
    )


@dataclass(frozen=True)
class AnswerPrompt:
    question: str
    prompt_word: str
    context: VideoContext
    mask_count: int
    rendered: str


def build_answer_prompt(
    question: str,
    context: VideoContext,
    prompt_word: str = DEFAULT_PROMPT_WORD,
    mask_count: int = 1,
) -> AnswerPrompt:
    """Assemble "Question: ... Answer: [MASK]. <prompt_word> <context>".

    The mask placeholder is a neutral sentinel; scorers substitute their
    own surface form at scoring time via render_for_scorer.
    """
    if not question.strip():
        raise ValidationError("question must be non-empty")
    if mask_count < 1:
        raise ValidationError("mask_count must be at least 1")
    masks = " ".join([MASK_SENTINEL] * mask_count)
    rendered = f"Question: {question} Answer: {masks}. {prompt_word}"
    if context.rendered:
        rendered += f" {context.rendered}"
    if rendered.count(MASK_SENTINEL) != mask_count:
        raise ValidationError(
            f"prompt text already contains the reserved placeholder {MASK_SENTINEL}"
        )
    return AnswerPrompt(
        question=question,
        prompt_word=prompt_word,
        context=context,
        mask_count=mask_count,
        rendered=rendered,
    )


def with_mask_count(prompt: AnswerPrompt, mask_count: int) -> AnswerPrompt:
    if mask_count == prompt.mask_count:
        return prompt
    return build_answer_prompt(prompt.question, prompt.context, prompt.prompt_word, mask_count)


def render_for_scorer(prompt: AnswerPrompt, mask_surface_form: str) -> str:
    """Replace the neutral mask sentinel with the scorer's surface form."""
    return prompt.rendered.replace(MASK_SENTINEL, mask_surface_form)


def truncate_to_budget(
    prompt: AnswerPrompt,
    budget: int,
    token_counter: Callable[[str], int],
) -> AnswerPrompt:
    """Drop whole captions from the context tail until the prompt fits.

    Connectives are recomputed for the survivors; captions are never
    split. Raises BudgetError when even an empty context exceeds the
    budget. Idempotent.
    """
    if token_counter(prompt.rendered) <= budget:
        return prompt
    ctx = prompt.context
    pairs = list(zip(ctx.frame_indices, (cap for _, cap in ctx.segments)))
    while pairs:
        pairs.pop()
        candidate = build_answer_prompt(
            prompt.question,
            build_context(pairs, ctx.total_frames),
            prompt.prompt_word,
            prompt.mask_count,
        )
        if token_counter(candidate.rendered) <= budget:
            return candidate
    raise BudgetError(
        f"prompt exceeds the {budget}-token budget even with an empty context"
    )
