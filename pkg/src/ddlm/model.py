"""Small pre-norm Transformer mask predictor with a shifted prediction head.

Logits at position ``i`` always predict the token at position ``i + 1``. The
same parameters serve causal attention (left-to-right training) and full
attention (denoising), so converting between the two is a metadata flip.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import numpy as np

from ddlm.errors import CapacityError, DataError, UsageError
from ddlm.numerics import (
    RandomStream,
    Tensor,
    embedding,
    masked_cross_entropy,
    parameter,
    rmsnorm,
    rope,
    silu,
    slice_axis1,
    softmax_lastdim,
)

ATTENTION_MODES = ("causal", "full")
INIT_STD = 0.02
_NEG = -1e9


@dataclass(frozen=True)
class TransformerConfig:
    vocab_size: int
    d_model: int = 128
    n_heads: int = 4
    n_layers: int = 4
    d_ff: int = 256
    max_seq_len: int = 256
    attention_mode: str = "causal"
    rope_base: float = 10000.0
    pad_id: int = 0
    bos_id: int = 1
    eos_id: int = 2
    mask_id: int = 3

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise UsageError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if (self.d_model // self.n_heads) % 2:
            raise UsageError("head dimension must be even for rotary encoding")
        if self.attention_mode not in ATTENTION_MODES:
            raise UsageError(f"attention_mode must be one of {ATTENTION_MODES}, got {self.attention_mode!r}")
        specials = (self.pad_id, self.bos_id, self.eos_id, self.mask_id)
        if len(set(specials)) != 4:
            raise UsageError(f"special token ids must be distinct, got {specials}")
        if max(specials) >= self.vocab_size or min(specials) < 0:
            raise UsageError(f"special token ids {specials} must lie in [0, {self.vocab_size})")
        for name in ("vocab_size", "d_model", "n_heads", "n_layers", "d_ff", "max_seq_len"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TransformerConfig":
        return cls(**d)


class ModelParams(dict):
    """Ordered mapping of parameter name to leaf :class:`Tensor`."""

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.items()}

    def copy(self) -> "ModelParams":
        return ModelParams({k: parameter(v.data.copy(), name=k) for k, v in self.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams({k: parameter(v.data.astype(dtype), name=k) for k, v in self.items()})

    def zero_grad(self):
        for v in self.values():
            v.grad = None

    def num_parameters(self) -> int:
        return sum(v.data.size for v in self.values())


def param_shapes(config: TransformerConfig) -> dict[str, tuple[int, ...]]:
    d, f, v = config.d_model, config.d_ff, config.vocab_size
    shapes: dict[str, tuple[int, ...]] = {"embed": (v, d)}
    for i in range(config.n_layers):
        p = f"layers.{i}."
        shapes[p + "attn_norm"] = (d,)
        shapes[p + "wq"] = (d, d)
        shapes[p + "wk"] = (d, d)
        shapes[p + "wv"] = (d, d)
        shapes[p + "wo"] = (d, d)
        shapes[p + "mlp_norm"] = (d,)
        shapes[p + "w_gate"] = (d, f)
        shapes[p + "w_up"] = (d, f)
        shapes[p + "w_down"] = (f, d)
    shapes["final_norm"] = (d,)
    shapes["lm_head"] = (d, v)
    return shapes


def init_params(config: TransformerConfig, seed: int, dtype=np.float32) -> ModelParams:
    rng = RandomStream(seed).fork("init")
    params = ModelParams()
    for name, shape in param_shapes(config).items():
        if name.endswith("norm"):
            data = np.ones(shape)
        else:
            data = rng.fork(name).truncated_normal(shape, INIT_STD)
        params[name] = parameter(data.astype(dtype), name=name)
    return params


def validate_params(params: ModelParams, config: TransformerConfig):
    expected = param_shapes(config)
    if set(expected) != set(params):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise UsageError(f"parameter set mismatch; missing={missing} extra={extra}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise UsageError(f"{name}: shape {params[name].shape} != expected {shape}")
        if not np.all(np.isfinite(params[name].data)):
            raise UsageError(f"{name}: non-finite values")


@lru_cache(maxsize=64)
def _rope_tables(length: int, head_dim: int, base: float) -> tuple[np.ndarray, np.ndarray]:
    half = head_dim // 2
    inv_freq = 1.0 / (base ** (np.arange(half, dtype=np.float64) / half))
    angles = np.outer(np.arange(length, dtype=np.float64), inv_freq)
    angles = np.concatenate([angles, angles], axis=-1)
    return np.cos(angles), np.sin(angles)


@lru_cache(maxsize=64)
def _causal_bias(length: int) -> np.ndarray:
    return np.triu(np.full((length, length), _NEG), k=1)


def _attention(x: Tensor, params: ModelParams, prefix: str, config: TransformerConfig, causal: bool) -> Tensor:
    b, length, d = x.shape
    h, hd = config.n_heads, config.head_dim
    cos, sin = _rope_tables(length, hd, config.rope_base)

    def heads(t: Tensor) -> Tensor:
        return t.reshape(b, length, h, hd).transpose(0, 2, 1, 3)

    q = rope(heads(x @ params[prefix + "wq"]), cos, sin)
    k = rope(heads(x @ params[prefix + "wk"]), cos, sin)
    v = heads(x @ params[prefix + "wv"])
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(hd))
    if causal:
        scores = scores + _causal_bias(length).astype(x.dtype)
    attn = softmax_lastdim(scores)
    out = (attn @ v).transpose(0, 2, 1, 3).reshape(b, length, d)
    return out @ params[prefix + "wo"]


def forward(params: ModelParams, config: TransformerConfig, tokens, mode: str | None = None) -> Tensor:
    """Return logits ``[B, L, V]``; ``mode`` overrides ``config.attention_mode``."""
    mode = mode or config.attention_mode
    if mode not in ATTENTION_MODES:
        raise UsageError(f"unknown attention mode {mode!r}")
    tokens = np.asarray(tokens)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    if tokens.ndim != 2:
        raise DataError(f"tokens must be [B, L], got shape {tokens.shape}")
    if tokens.shape[1] > config.max_seq_len:
        raise CapacityError(f"sequence length {tokens.shape[1]} exceeds max_seq_len={config.max_seq_len}")
    causal = mode == "causal"
    x = embedding(params["embed"], tokens)
    for i in range(config.n_layers):
        p = f"layers.{i}."
        x = x + _attention(rmsnorm(x, params[p + "attn_norm"]), params, p, config, causal)
        hmid = rmsnorm(x, params[p + "mlp_norm"])
        gated = silu(hmid @ params[p + "w_gate"]) * (hmid @ params[p + "w_up"])
        x = x + gated @ params[p + "w_down"]
    x = rmsnorm(x, params["final_norm"])
    return x @ params["lm_head"]


def to_diffusion_init(ar_params: ModelParams, ar_config: TransformerConfig) -> tuple[ModelParams, TransformerConfig]:
    if ar_config.attention_mode != "causal":
        raise UsageError("to_diffusion_init expects a causal (autoregressive) config")
    return ar_params.copy(), replace(ar_config, attention_mode="full")


def to_causal(params: ModelParams, config: TransformerConfig) -> tuple[ModelParams, TransformerConfig]:
    return params.copy(), replace(config, attention_mode="causal")


def ar_loss(params: ModelParams, config: TransformerConfig, tokens, loss_mask=None) -> Tensor:
    """Mean next-token negative log-likelihood under causal attention.

    ``loss_mask[b, n]`` selects which target positions ``n >= 1`` count; by
    default every non-padding position after the leading BOS.
    """
    tokens = np.asarray(tokens)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    logits = forward(params, config, tokens, mode="causal")
    b, length = tokens.shape
    if loss_mask is None:
        loss_mask = tokens != config.pad_id
    weights = np.asarray(loss_mask, dtype=np.float64)[:, 1:]
    total = weights.sum()
    if total == 0:
        return Tensor(np.zeros((), dtype=logits.dtype))
    shifted = slice_axis1(logits, 0, length - 1).reshape(b * (length - 1), config.vocab_size)
    return masked_cross_entropy(shifted, tokens[:, 1:].reshape(-1), weights.reshape(-1)) * (1.0 / total)
