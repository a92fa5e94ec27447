"""Training-data preparation for the learned visual-to-text projection.

Covers the token-masking procedure (ratio + 80/10/10 replacement), the
projection forward pass, and bundling both with retrieved context into a
serializable training example. The optimization loop itself lives with
the model backend, not here.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .hashing import SplitMix64
from .prompting import VideoContext
from .retrieval import FrameFeatures


@dataclass(frozen=True)
class MaskingConfig:
    """Masking parameters; replacement probabilities must sum to 1."""

    vocab_size: int
    mask_token_id: int
    mask_ratio: float = 0.5
    replace_probs: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ValidationError("vocab_size must be at least 1")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValidationError(f"mask_ratio {self.mask_ratio} outside [0, 1]")
        if len(self.replace_probs) != 3 or any(p < 0 for p in self.replace_probs):
            raise ValidationError("replace_probs must be three non-negative values")
        if abs(sum(self.replace_probs) - 1.0) > 1e-9:
            raise ValidationError(f"replace_probs sum to {sum(self.replace_probs)}, expected 1.0")


@dataclass(frozen=True)
class MaskedSequence:
    """Token ids after alteration plus the original ids at altered spots."""

    input_tokens: tuple[int, ...]
    label_positions: tuple[int, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.label_positions) != len(self.labels):
            raise ValidationError("label_positions and labels must have equal length")
        previous = -1
        for pos in self.label_positions:
            if not previous < pos < len(self.input_tokens):
                raise ValidationError(f"label position {pos} not strictly increasing in bounds")
            previous = pos

    @property
    def mask_count(self) -> int:
        return len(self.labels)


def mask_tokens(tokens: Sequence[int], cfg: MaskingConfig) -> MaskedSequence:
    """Independently select positions at ``mask_ratio`` and alter them.

    The seeded splitmix64 stream is consumed in position order, drawing
    lazily: one draw decides selection; for a selected position a second
    draw picks the branch (mask / random / keep); the random branch
    draws once more for the replacement id. Selected positions keep
    their original id as the label.
    """
    tokens = [int(t) for t in tokens]
    if not tokens:
        raise ValidationError("token sequence must be non-empty")
    for i, token in enumerate(tokens):
        if not 0 <= token < cfg.vocab_size:
            raise ValidationError(f"token {token} at position {i} outside vocab [0, {cfg.vocab_size})")
    p_mask, p_random, _ = cfg.replace_probs
    stream = SplitMix64(cfg.seed)
    output = list(tokens)
    positions: list[int] = []
    labels: list[int] = []
    for i, token in enumerate(tokens):
        if stream.next_unit() >= cfg.mask_ratio:
            continue
        positions.append(i)
        labels.append(token)
        branch = stream.next_unit()
        if branch < p_mask:
            output[i] = cfg.mask_token_id
        elif branch < p_mask + p_random:
            output[i] = stream.next_below(cfg.vocab_size)
        # else: keep the original token
    return MaskedSequence(
        input_tokens=tuple(output),
        label_positions=tuple(positions),
        labels=tuple(labels),
    )


@dataclass
class ProjectionMatrix:
    """d x d_lm float32 projection from vision space to LM embedding space."""

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ValidationError("projection matrix must be 2-D")
        if not np.all(np.isfinite(values)):
            raise ValidationError("projection matrix contains NaN or infinity")
        self.values = values

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def cols(self) -> int:
        return int(self.values.shape[1])


def apply_projection(frames: FrameFeatures, w: ProjectionMatrix) -> np.ndarray:
    """Row-wise product z_t W, accumulated in float64, stored as float32."""
    if frames.dim != w.rows:
        raise ValidationError(f"frame dim {frames.dim} does not match projection rows {w.rows}")
    product = frames.frames.astype(np.float64) @ w.values.astype(np.float64)
    return product.astype(np.float32)


@dataclass
class TrainingExample:
    """Inputs for one masked-LM training step on a video-caption pair."""

    video_prompts: np.ndarray
    context: VideoContext
    caption_tokens: MaskedSequence


def assemble_training_example(
    frames: FrameFeatures,
    w: ProjectionMatrix,
    context: VideoContext,
    caption_tokens: Sequence[int],
    cfg: MaskingConfig,
) -> TrainingExample:
    prompts = apply_projection(frames, w)
    masked = mask_tokens(caption_tokens, cfg)
    return TrainingExample(video_prompts=prompts, context=context, caption_tokens=masked)


def training_example_to_json(example: TrainingExample) -> str:
    """Single JSON line; the prompt block is base64 of little-endian float32."""
    prompts = np.ascontiguousarray(example.video_prompts, dtype="<f4")
    payload = {
        "video_prompts": {
            "rows": int(prompts.shape[0]),
            "cols": int(prompts.shape[1]),
            "data": base64.b64encode(prompts.tobytes()).decode("ascii"),
        },
        "context": {
            "segments": [list(seg) for seg in example.context.segments],
            "rendered": example.context.rendered,
            "frame_indices": list(example.context.frame_indices),
            "total_frames": example.context.total_frames,
        },
        "caption_tokens": {
            "input_tokens": list(example.caption_tokens.input_tokens),
            "label_positions": list(example.caption_tokens.label_positions),
            "labels": list(example.caption_tokens.labels),
        },
    }
    return json.dumps(payload, ensure_ascii=False, sort_keys=True)


def training_example_from_json(line: str) -> TrainingExample:
    payload = json.loads(line)
    block = payload["video_prompts"]
    prompts = np.frombuffer(
        base64.b64decode(block["data"]), dtype="<f4"
    ).reshape(block["rows"], block["cols"])
    ctx = payload["context"]
    masked = payload["caption_tokens"]
    return TrainingExample(
        video_prompts=prompts.copy(),
        context=VideoContext(
            segments=tuple(tuple(seg) for seg in ctx["segments"]),
            rendered=ctx["rendered"],
            frame_indices=tuple(ctx["frame_indices"]),
            total_frames=ctx["total_frames"],
        ),
        caption_tokens=MaskedSequence(
            input_tokens=tuple(masked["input_tokens"]),
            label_positions=tuple(masked["label_positions"]),
            labels=tuple(masked["labels"]),
        ),
    )
