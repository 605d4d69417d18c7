"""Run configuration: JSON file, environment and flag overrides, provenance hash."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ddlm.diffusion import CartConfig
from ddlm.errors import UsageError
from ddlm.model import TransformerConfig
from ddlm.tasks.tokenizer import Tokenizer

MODES = ("ar_pretrain", "diffusion_pretrain", "sft")
LR_SCHEDULES = ("constant", "cosine")
SEED_ENV = "DDLM_SEED"


def default_model_config(**overrides) -> TransformerConfig:
    tok = Tokenizer()
    base = dict(
        vocab_size=tok.vocab_size,
        d_model=64,
        n_heads=4,
        n_layers=2,
        d_ff=192,
        max_seq_len=64,
        pad_id=tok.pad_id,
        bos_id=tok.bos_id,
        eos_id=tok.eos_id,
        mask_id=tok.mask_id,
    )
    base.update(overrides)
    return TransformerConfig(**base)


@dataclass(frozen=True)
class RunConfig:
    model: TransformerConfig = field(default_factory=default_model_config)
    mode: str = "diffusion_pretrain"
    task: str = "countdown"
    train_path: str = "data/countdown_train.jsonl"
    heldout_path: str = "data/countdown_heldout.jsonl"
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.98)
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    warmup_steps: int = 100
    lr_schedule: str = "cosine"
    min_lr_ratio: float = 0.1
    grad_clip: float = 1.0
    cart_enabled: bool = False
    cart_p: float = 0.3
    cart_weight_floor: float = 0.0
    total_steps: int = 1000
    batch_size: int = 32
    log_interval: int = 50
    heldout_size: int = 256
    seed: int = 0
    init_checkpoint: str | None = None
    dtype: str = "float32"

    def __post_init__(self):
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}, got {self.mode!r}")
        want = "causal" if self.mode == "ar_pretrain" else "full"
        if self.model.attention_mode != want:
            object.__setattr__(self, "model", replace(self.model, attention_mode=want))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.lr_schedule not in LR_SCHEDULES:
            raise UsageError(f"lr_schedule must be one of {LR_SCHEDULES}, got {self.lr_schedule!r}")
        if self.dtype not in ("float32", "float64"):
            raise UsageError("dtype must be float32 or float64")
        for name in ("total_steps", "batch_size", "log_interval"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive")

    @property
    def cart(self) -> CartConfig | None:
        if not self.cart_enabled:
            return None
        return CartConfig(p=self.cart_p, enabled=True, weight_floor=self.cart_weight_floor)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise UsageError(f"unknown config fields: {unknown}")
        model = d.pop("model", None)
        if isinstance(model, dict):
            base = default_model_config().to_dict()
            base.update(model)
            d["model"] = TransformerConfig.from_dict(base)
        elif model is not None:
            d["model"] = model
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def with_overrides(self, **kw) -> "RunConfig":
        d = self.to_dict()
        model_kw = kw.pop("model", None) or {}
        d.update({k: v for k, v in kw.items() if v is not None})
        d["model"].update(model_kw)
        return RunConfig.from_dict(d)

    def diff(self, other: "RunConfig", ignore=()) -> dict:
        a, b = _flatten(self.to_dict()), _flatten(other.to_dict())
        return {k: (a.get(k), b.get(k)) for k in sorted(set(a) | set(b)) if k not in ignore and a.get(k) != b.get(k)}


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def load_config(path=None, overrides: dict | None = None, env=None) -> RunConfig:
    """File < ``DDLM_SEED`` environment variable < explicit overrides."""
    env = os.environ if env is None else env
    d = {}
    if path is not None:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    config = RunConfig.from_dict(d)
    if env.get(SEED_ENV):
        config = config.with_overrides(seed=int(env[SEED_ENV]))
    if overrides:
        config = config.with_overrides(**overrides)
    return config
