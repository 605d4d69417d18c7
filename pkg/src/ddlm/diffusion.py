"""Absorbing-state forward process and the denoising training objectives.

Two per-token weightings share one loss routine:

* sequence-level: every masked token gets ``1/t`` (linear schedule
  ``alpha_t = 1 - t``);
* context-adaptive (CART): a masked token at ``n`` gets
  ``0.5 * sum_i clean(i) * p * (1 - p) ** (|n - i| - 1)``, so tokens that sit
  close to many clean neighbours are treated as less noisy.

Logits follow the shift convention: the prediction for position ``n`` is read
from logits position ``n - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ddlm.errors import CapacityError, UsageError
from ddlm.numerics import RandomStream, Tensor, masked_cross_entropy, slice_axis1

MASK_ID = 3
BOS_ID = 1


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str = "linear"

    def __post_init__(self):
        if self.kind != "linear":
            raise UsageError(f"unsupported noise schedule {self.kind!r}")

    def alpha(self, t):
        return 1.0 - np.asarray(t, dtype=np.float64)

    def mask_prob(self, t):
        return 1.0 - self.alpha(t)

    def base_weight(self, t):
        t = np.asarray(t, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return np.where(t > 0, 1.0 / np.where(t > 0, t, 1.0), np.inf)


@dataclass(frozen=True)
class CartConfig:
    p: float = 0.3
    enabled: bool = True
    weight_floor: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise UsageError(f"CART sharpness p must lie in (0, 1], got {self.p}")
        if self.weight_floor < 0:
            raise UsageError("weight_floor must be non-negative")


@dataclass
class CorruptedBatch:
    x0: np.ndarray
    xt: np.ndarray
    t: np.ndarray
    mask_flags: np.ndarray
    protected_flags: np.ndarray
    mask_id: int = field(default=MASK_ID)

    @property
    def num_masked(self) -> int:
        return int(self.mask_flags.sum())


def _as_2d(a, dtype=None) -> np.ndarray:
    a = np.asarray(a, dtype=dtype)
    return a[None, :] if a.ndim == 1 else a


def mask_from_uniforms(x0, t, protected_flags, uniforms, mask_id: int = MASK_ID) -> CorruptedBatch:
    """Mask every unprotected position whose uniform draw falls below ``t``."""
    x0 = _as_2d(x0).astype(np.int64)
    protected = _as_2d(protected_flags, bool)
    u = _as_2d(uniforms, np.float64)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (x0.shape[0],)).copy()
    if np.any((t < 0) | (t > 1)):
        raise UsageError(f"t must lie in [0, 1], got {t}")
    if protected.shape != x0.shape or u.shape != x0.shape:
        raise UsageError("x0, protected_flags and uniforms must share a shape")
    masked = (u < t[:, None]) & ~protected
    xt = np.where(masked, mask_id, x0)
    return CorruptedBatch(x0=x0, xt=xt, t=t, mask_flags=masked, protected_flags=protected, mask_id=mask_id)


def mask_sequence(x0, t, protected_flags, rng: RandomStream, mask_id: int = MASK_ID) -> CorruptedBatch:
    """Independently replace each unprotected token by MASK with probability ``t``.

    Row ``b`` draws its uniforms from ``rng.fork("row", b)``, so a sequence's
    corruption does not depend on what else shares its batch.
    """
    x0 = _as_2d(x0)
    u = np.stack([rng.fork("row", b).random(x0.shape[1]) for b in range(x0.shape[0])])
    return mask_from_uniforms(x0, t, protected_flags, u, mask_id)


def sample_times(rng: RandomStream, n: int) -> np.ndarray:
    """``n`` draws from U(0, 1], one per sequence."""
    return 1.0 - rng.random(n)


def geometric_pmf(p: float, k) -> np.ndarray | float:
    """``p * (1 - p) ** k`` on the support ``k = 0, 1, 2, ...``."""
    if not 0.0 < p <= 1.0:
        raise UsageError(f"p must lie in (0, 1], got {p}")
    k_arr = np.asarray(k)
    if np.any(k_arr < 0):
        raise UsageError(f"geometric pmf needs k >= 0, got {k}")
    if p == 1.0:
        out = np.where(k_arr == 0, 1.0, 0.0)
    else:
        out = p * (1.0 - p) ** k_arr.astype(np.float64)
    return float(out) if np.ndim(out) == 0 else out


def _distance_kernel(length: int, p: float) -> np.ndarray:
    idx = np.arange(length)
    dist = np.abs(idx[:, None] - idx[None, :])
    kernel = np.zeros((length, length))
    off = dist > 0
    kernel[off] = geometric_pmf(p, dist[off] - 1)
    return kernel


def cart_weights(xt, protected_flags, cart: CartConfig, mask_id: int = MASK_ID) -> np.ndarray:
    """Per-position CART weights ``[B, L]``; zero at every clean position."""
    xt = _as_2d(xt)
    masked = xt == mask_id
    clean = (~masked).astype(np.float64)
    kernel = _distance_kernel(xt.shape[1], cart.p)
    w = 0.5 * clean @ kernel.T
    if cart.weight_floor > 0:
        w = np.maximum(w, cart.weight_floor)
    return np.where(masked, w, 0.0)


def loss_weights(batch: CorruptedBatch, schedule: NoiseSchedule, cart: CartConfig | None = None) -> np.ndarray:
    if cart is not None and cart.enabled:
        return cart_weights(batch.xt, batch.protected_flags, cart, batch.mask_id)
    w = np.zeros(batch.xt.shape)
    rows, cols = np.nonzero(batch.mask_flags)
    if rows.size:
        w[rows, cols] = schedule.base_weight(batch.t[rows])
    return w


def diffusion_loss(logits: Tensor, batch: CorruptedBatch, schedule: NoiseSchedule, cart: CartConfig | None = None) -> Tensor:
    """Weighted masked-token cross-entropy, divided by L and averaged over the batch."""
    b, length, vocab = logits.shape
    if batch.xt.shape != (b, length):
        raise UsageError(f"logits {logits.shape} do not match corrupted batch {batch.xt.shape}")
    if np.any(batch.mask_flags[:, 0]):
        raise UsageError("position 0 is masked but has no preceding logits to predict it from")
    w = loss_weights(batch, schedule, cart)
    if not np.any(w):
        return Tensor(np.zeros((), dtype=logits.dtype))
    shifted = slice_axis1(logits, 0, length - 1).reshape(b * (length - 1), vocab)
    total = masked_cross_entropy(shifted, batch.x0[:, 1:].reshape(-1), w[:, 1:].reshape(-1))
    return total * (1.0 / (length * b))


def sft_corrupt(
    prompt_ids,
    response_ids,
    t: float,
    rng: RandomStream,
    *,
    bos_id: int = BOS_ID,
    mask_id: int = MASK_ID,
    max_seq_len: int | None = None,
) -> CorruptedBatch:
    """Corrupt only the response of ``[BOS] + prompt + response``."""
    prompt = [int(x) for x in prompt_ids]
    response = [int(x) for x in response_ids]
    seq = np.array([bos_id] + prompt + response, dtype=np.int64)
    if max_seq_len is not None and seq.size > max_seq_len:
        raise CapacityError(f"prompt+response length {seq.size} exceeds max_seq_len={max_seq_len}")
    protected = np.zeros(seq.size, dtype=bool)
    protected[: 1 + len(prompt)] = True
    return mask_sequence(seq, t, protected, rng, mask_id)


def prefix_protection(length: int, prompt_lengths) -> np.ndarray:
    """Protected flags ``[B, L]`` covering BOS plus each row's prompt."""
    prompt_lengths = np.asarray(prompt_lengths).reshape(-1)
    idx = np.arange(int(length))
    return idx[None, :] < (1 + prompt_lengths)[:, None]
