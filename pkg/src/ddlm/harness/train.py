"""Training driver for the three modes: ar_pretrain, diffusion_pretrain, sft."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ddlm.diffusion import NoiseSchedule, diffusion_loss, mask_from_uniforms, mask_sequence, prefix_protection, sample_times
from ddlm.errors import NumericError, TrainingError, UsageError
from ddlm.harness.checkpoint import load_checkpoint, save_checkpoint
from ddlm.harness.config import RunConfig
from ddlm.harness.metrics import MetricsLog
from ddlm.model import ModelParams, TransformerConfig, ar_loss, forward, init_params, to_diffusion_init, validate_params
from ddlm.numerics import OptimState, RandomStream, Tensor, adamw_step, no_grad
from ddlm.numerics.rng import ALGORITHM
from ddlm.tasks import get_task, pack, read_jsonl, required_seq_len
from ddlm.tasks.dataset import PackedData
from ddlm.tasks.tokenizer import Tokenizer

log = logging.getLogger(__name__)

EVAL_BATCH = 64


@dataclass
class TrainResult:
    config: RunConfig
    params: ModelParams
    final_checkpoint: Path
    best_checkpoint: Path
    metrics_path: Path
    timing_path: Path
    seq_len: int
    best_heldout: float
    initial_heldout: float


def load_data(config: RunConfig, tokenizer: Tokenizer | None = None) -> tuple[PackedData, PackedData]:
    tokenizer = tokenizer or Tokenizer()
    task = get_task(config.task)
    train_records = read_jsonl(config.train_path)
    heldout_records = read_jsonl(config.heldout_path)[: config.heldout_size]
    if not train_records:
        raise UsageError(f"training set {config.train_path} is empty")
    seq_len = required_seq_len(train_records + heldout_records, tokenizer, task.response_slot)
    if seq_len > config.model.max_seq_len:
        raise UsageError(f"data needs seq_len={seq_len} but model max_seq_len={config.model.max_seq_len}")
    return pack(train_records, tokenizer, seq_len), pack(heldout_records, tokenizer, seq_len)


def snapshot(config: RunConfig, seq_len: int, step: int, model: TransformerConfig | None = None) -> dict:
    return {
        "run_config": config.to_dict(),
        "config_sha256": config.config_hash(),
        "model": (model or config.model).to_dict(),
        "seq_len": seq_len,
        "step": step,
        "task": config.task,
        "rng_algorithm": ALGORITHM,
    }


def initial_params(config: RunConfig) -> ModelParams:
    dtype = np.dtype(config.dtype)
    if not config.init_checkpoint:
        return init_params(config.model, config.seed, dtype=dtype)
    params, snap = load_checkpoint(config.init_checkpoint)
    src = TransformerConfig.from_dict(snap["model"])
    if src.attention_mode == "causal" and config.model.attention_mode == "full":
        params, src = to_diffusion_init(params, src)
    mismatch = {k: (v, getattr(config.model, k)) for k, v in src.to_dict().items() if getattr(config.model, k) != v and k != "max_seq_len"}
    if mismatch:
        raise UsageError(f"init checkpoint model differs from run model: {mismatch}")
    validate_params(params, config.model)
    return params.astype(dtype)


def _protection(config: RunConfig, data: PackedData, rows: np.ndarray) -> np.ndarray:
    if config.mode == "sft":
        return prefix_protection(data.seq_len, data.prompt_lengths[rows])
    return prefix_protection(data.seq_len, np.zeros(rows.size, dtype=np.int64))


def batch_loss(params: ModelParams, config: RunConfig, data: PackedData, rows: np.ndarray, rng: RandomStream) -> Tensor:
    tokens = data.tokens[rows]
    if config.mode == "ar_pretrain":
        return ar_loss(params, config.model, tokens)
    t = sample_times(rng.fork("t"), rows.size)
    batch = mask_sequence(tokens, t, _protection(config, data, rows), rng.fork("mask"), config.model.mask_id)
    logits = forward(params, config.model, batch.xt, mode="full")
    return diffusion_loss(logits, batch, NoiseSchedule(), config.cart)


def heldout_loss(params: ModelParams, config: RunConfig, data: PackedData) -> float:
    """Held-out objective on a corruption set fixed by the run seed.

    Noise levels are stratified, ``t_i = (i + 0.5) / n``, and masks come from a
    dedicated stream, so runs sharing a seed are scored on identical inputs.
    """
    n = len(data)
    if n == 0:
        return float("nan")
    total = 0.0
    rng = RandomStream(config.seed).fork("heldout")
    with no_grad():
        for lo in range(0, n, EVAL_BATCH):
            rows = np.arange(lo, min(n, lo + EVAL_BATCH))
            if config.mode == "ar_pretrain":
                loss = ar_loss(params, config.model, data.tokens[rows])
            else:
                t = (rows + 0.5) / n
                u = np.stack([rng.fork("row", int(r)).random(data.seq_len) for r in rows])
                batch = mask_from_uniforms(data.tokens[rows], t, _protection(config, data, rows), u, config.model.mask_id)
                logits = forward(params, config.model, batch.xt, mode="full")
                loss = diffusion_loss(logits, batch, NoiseSchedule(), config.cart)
            total += float(loss.data) * rows.size
    return total / n


def _lr_at(config: RunConfig, step: int) -> float:
    """Linear warmup, then constant or cosine decay to ``min_lr_ratio * lr``."""
    if config.warmup_steps and step <= config.warmup_steps:
        return config.lr * step / config.warmup_steps
    if config.lr_schedule == "constant":
        return config.lr
    span = max(1, config.total_steps - config.warmup_steps)
    progress = min(1.0, (step - config.warmup_steps) / span)
    floor = config.min_lr_ratio
    return config.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + math.cos(math.pi * progress)))


def _clip(grads: dict, max_norm: float):
    if max_norm <= 0:
        return
    sq = sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values() if g is not None)
    norm = math.sqrt(sq)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            if g is not None:
                g *= scale


def train(config: RunConfig, out_dir, data: tuple[PackedData, PackedData] | None = None) -> TrainResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_data, held = data if data is not None else load_data(config)
    seq_len = train_data.seq_len
    params = initial_params(config)
    decay = {k: v.ndim >= 2 for k, v in params.items()}
    state = OptimState(lr=config.lr, betas=config.betas, eps=config.adam_eps, weight_decay=config.weight_decay)
    rng = RandomStream(config.seed).fork("train")
    chash = config.config_hash()

    metrics = MetricsLog(out_dir / "metrics.csv", extra_columns=("heldout_loss",), config_hash=chash)
    timing_path = out_dir / "timing.csv"
    timing_path.write_text("step,wallclock_s\n", encoding="utf-8")
    final_path, best_path = out_dir / "final.ckpt", out_dir / "best.ckpt"

    initial = heldout_loss(params, config, held)
    metrics.append(step=0, loss="", tokens_seen=0, lr=0.0, heldout_loss=initial)
    best = initial
    save_checkpoint(best_path, params, snapshot(config, seq_len, 0))
    start = time.perf_counter()
    with timing_path.open("a", encoding="utf-8") as fh:
        fh.write("0,0.0\n")

    n = len(train_data)
    per_epoch = max(1, n // config.batch_size)
    order = None
    window: list[float] = []
    for step in range(1, config.total_steps + 1):
        epoch, b = divmod(step - 1, per_epoch)
        if b == 0:
            order = rng.fork("data", epoch).permutation(n)
        rows = order[b * config.batch_size : (b + 1) * config.batch_size]
        params.zero_grad()
        try:
            loss = batch_loss(params, config, train_data, rows, rng.fork("batch", step))
        except NumericError as exc:
            raise TrainingError(f"{exc} at step {step} (epoch {epoch}, batch {b})", step=step, batch_id=(epoch, b)) from None
        value = float(loss.data)
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss at step {step} (epoch {epoch}, batch {b})", step=step, batch_id=(epoch, b))
        loss.backward()
        grads = {k: p.grad for k, p in params.items()}
        _clip(grads, config.grad_clip)
        state.lr = _lr_at(config, step)
        try:
            adamw_step(params, grads, state, decay_mask=decay)
        except TrainingError as exc:
            raise TrainingError(f"{exc} at step {step} (epoch {epoch}, batch {b})", step=step, batch_id=(epoch, b), param=exc.param) from None
        window.append(value)
        if step % config.log_interval == 0 or step == config.total_steps:
            h = heldout_loss(params, config, held)
            mean_loss = float(np.mean(window))
            metrics.append(
                step=step,
                loss=mean_loss,
                tokens_seen=step * config.batch_size * seq_len,
                lr=state.lr,
                heldout_loss=h,
            )
            with timing_path.open("a", encoding="utf-8") as fh:
                fh.write(f"{step},{time.perf_counter() - start:.3f}\n")
            window = []
            if h < best:
                best = h
                save_checkpoint(best_path, params, snapshot(config, seq_len, step))
            log.info("step %d loss %.4f heldout %.4f", step, mean_loss, h)
    save_checkpoint(final_path, params, snapshot(config, seq_len, config.total_steps))
    return TrainResult(config, params, final_path, best_path, metrics.path, timing_path, seq_len, best, initial)

