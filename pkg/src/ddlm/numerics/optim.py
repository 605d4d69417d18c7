"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ddlm.errors import TrainingError


@dataclass
class OptimState:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: dict, grads: dict, state: OptimState, decay_mask: dict | None = None) -> OptimState:
    """Update ``params`` (name -> Tensor) in place from ``grads`` (name -> array).

    Parameters missing from ``grads`` or with a ``None`` gradient are skipped.
    ``decay_mask`` maps names to whether weight decay applies (default: all).
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}", param=name)
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise TrainingError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name!r}", param=name)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        wd = state.weight_decay if (decay_mask is None or decay_mask.get(name, True)) else 0.0
        if wd:
            p.data -= (state.lr * wd) * p.data
        p.data -= (state.lr * update).astype(p.data.dtype)
    return state
