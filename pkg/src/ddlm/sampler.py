"""Iterative unmasking decoder for completion and infilling.

Each of ``K`` steps runs one full-attention forward pass over the current
sequence, scores every still-masked free position from its shifted logits,
commits a budgeted subset and leaves the rest masked. Committed and fixed
tokens never change again.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ddlm.errors import CapacityError, UsageError
from ddlm.model import ModelParams, TransformerConfig, forward
from ddlm.numerics import RandomStream, no_grad

STRATEGIES = ("max_confidence", "random_order", "left_to_right", "min_entropy")


@dataclass
class GenerationTemplate:
    tokens: np.ndarray
    fixed_flags: np.ndarray

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64).copy()
        self.fixed_flags = np.asarray(self.fixed_flags, dtype=bool).copy()
        if self.tokens.ndim != 1 or self.tokens.shape != self.fixed_flags.shape:
            raise UsageError("template tokens and fixed_flags must be equal-length 1-D arrays")

    def validate(self, config: TransformerConfig):
        if len(self.tokens) == 0 or self.tokens[0] != config.bos_id or not self.fixed_flags[0]:
            raise UsageError("template must start with a fixed BOS token")
        if np.any(self.tokens[self.fixed_flags] == config.mask_id):
            raise UsageError("fixed template positions must not hold MASK")
        if np.any(self.tokens[~self.fixed_flags] != config.mask_id):
            raise UsageError("free template positions must hold MASK")
        if len(self.tokens) > config.max_seq_len:
            raise CapacityError(f"template length {len(self.tokens)} exceeds max_seq_len={config.max_seq_len}")

    @property
    def free_positions(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed_flags)


@dataclass(frozen=True)
class DecodeConfig:
    steps: int = 16
    strategy: str = "max_confidence"
    temperature: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise UsageError(f"steps must be >= 1, got {self.steps}")
        if self.strategy not in STRATEGIES:
            raise UsageError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.temperature < 0:
            raise UsageError("temperature must be >= 0")


@dataclass
class DecodeResult:
    tokens: np.ndarray
    trace: list[dict] = field(default_factory=list)

    @property
    def forward_passes(self) -> int:
        return len(self.trace)

    def __iter__(self):
        # allows ``tokens, trace = decode(...)``
        yield self.tokens
        yield self.trace


def unmask_counts(num_masked: int, steps: int) -> list[int]:
    """Per-step unmask budget: ``ceil(remaining / steps_left)`` each step."""
    if num_masked < 1:
        raise UsageError("unmask_counts needs at least one masked position")
    if steps < 1:
        raise UsageError("steps must be >= 1")
    k = min(steps, num_masked)
    counts, remaining = [], num_masked
    for left in range(k, 0, -1):
        c = -(-remaining // left)
        counts.append(c)
        remaining -= c
    return counts


def select_positions(strategy: str, positions, scores, count: int, rng: RandomStream | None = None) -> np.ndarray:
    """Choose ``count`` of the masked ``positions``; returned in ascending order."""
    positions = np.asarray(positions, dtype=np.int64)
    if count > positions.size:
        raise UsageError(f"cannot select {count} of {positions.size} masked positions")
    if strategy == "left_to_right":
        chosen = np.sort(positions)[:count]
    elif strategy == "random_order":
        if rng is None:
            raise UsageError("random_order selection needs a random stream")
        chosen = rng.choice(positions, size=count, replace=False)
    elif strategy in ("max_confidence", "min_entropy"):
        scores = np.asarray(scores, dtype=np.float64)
        order = np.lexsort((positions, -scores))
        chosen = positions[order[:count]]
    else:
        raise UsageError(f"unknown strategy {strategy!r}")
    return np.sort(chosen)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def banned_ids(config: TransformerConfig) -> list[int]:
    """Tokens the decoder never emits."""
    return [config.mask_id, config.bos_id, config.pad_id]


def decode(params: ModelParams, config: TransformerConfig, template: GenerationTemplate, decode_config: DecodeConfig) -> DecodeResult:
    if config.attention_mode != "full":
        raise UsageError("decode needs a full-attention model; convert with to_diffusion_init first")
    template.validate(config)
    current = template.tokens.copy()
    if template.free_positions.size == 0:
        return DecodeResult(current, [])
    rng = RandomStream(decode_config.seed).fork("decode")
    counts = unmask_counts(template.free_positions.size, decode_config.steps)
    banned = banned_ids(config)
    trace: list[dict] = []
    for step, count in enumerate(counts):
        with no_grad():
            logits = forward(params, config, current[None, :]).data[0].astype(np.float64)
        masked = np.flatnonzero((current == config.mask_id) & ~template.fixed_flags)
        rows = logits[masked - 1]
        rows[:, banned] = -np.inf
        probs = _softmax(rows)
        if decode_config.strategy == "min_entropy":
            with np.errstate(divide="ignore", invalid="ignore"):
                plogp = np.where(probs > 0, probs * np.log(probs), 0.0)
            scores = plogp.sum(axis=-1)
        else:
            scores = probs.max(axis=-1)
        step_rng = rng.fork("step", step)
        chosen = select_positions(decode_config.strategy, masked, scores, count, step_rng.fork("select"))
        idx = np.searchsorted(masked, chosen)
        if decode_config.temperature == 0:
            new = rows[idx].argmax(axis=-1)
        else:
            tempered = _softmax(rows[idx] / decode_config.temperature)
            draw = step_rng.fork("sample")
            new = np.array([draw.choice(len(p), p=p) for p in tempered])
        current[chosen] = new
        trace.append(
            {
                "step": step,
                "positions": chosen.tolist(),
                "tokens": new.astype(int).tolist(),
                "confidences": [float(c) for c in probs[idx].max(axis=-1)],
            }
        )
    return DecodeResult(current, trace)


def build_template(tokenizer, prefix: str, infill_slot_lengths=(), segments=None, max_seq_len: int | None = None) -> GenerationTemplate:
    """Fixed text interleaved with MASK runs.

    The layout is ``BOS prefix seg[0] slot[0] seg[1] ... slot[k-1] seg[k]``;
    ``segments`` defaults to empty strings. A non-empty final segment pins the
    exact ending.
    """
    slots = [int(n) for n in infill_slot_lengths]
    if any(n < 0 for n in slots):
        raise UsageError("slot lengths must be non-negative")
    if segments is None:
        segments = [""] * (len(slots) + 1)
    if len(segments) != len(slots) + 1:
        raise UsageError(f"need {len(slots) + 1} segments for {len(slots)} slots, got {len(segments)}")
    tokens = [tokenizer.bos_id] + tokenizer.encode(prefix) + tokenizer.encode(segments[0])
    fixed = [True] * len(tokens)
    for n, seg in zip(slots, segments[1:]):
        tokens += [tokenizer.mask_id] * n
        fixed += [False] * n
        seg_ids = tokenizer.encode(seg)
        tokens += seg_ids
        fixed += [True] * len(seg_ids)
    if max_seq_len is not None and len(tokens) > max_seq_len:
        raise CapacityError(f"template length {len(tokens)} exceeds max_seq_len={max_seq_len}")
    return GenerationTemplate(np.array(tokens), np.array(fixed))


def write_trace(trace, path):
    """One JSON object per decoding step."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps(rec) + "\n")


def read_trace(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
