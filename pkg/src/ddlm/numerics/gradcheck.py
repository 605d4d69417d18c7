"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ddlm.numerics.tensor import Tensor

DENOM_FLOOR = 1e-8


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), DENOM_FLOOR)
    return np.abs(analytic - numeric) / denom


# central differences, and the fourth-order five-point stencil used to refine them
STENCILS = {
    3: ((1, 1.0), (-1, -1.0)),
    5: ((2, -1.0), (1, 8.0), (-1, -8.0), (-2, 1.0)),
}
STENCIL_SCALE = {3: 2.0, 5: 12.0}
# elements are refined once central differences disagree by more than this,
# or by 1e3 units of the analytic dtype's precision if that is larger
REFINE_FLOOR = 1e-6


def numeric_gradient(
    f: Callable[[dict], Tensor], params: dict, eps: float, dtype=np.longdouble, stencil: int = 3, only: dict | None = None
) -> dict:
    """Finite-difference gradient of ``f`` with every parameter promoted to ``dtype``.

    ``only`` maps names to flat indices to evaluate; other entries are zero.
    """
    if stencil not in STENCILS:
        raise ValueError(f"stencil must be one of {sorted(STENCILS)}, got {stencil}")
    probe = {k: Tensor(np.array(p.data, dtype=dtype)) for k, p in params.items()}
    step = np.asarray(eps, dtype=dtype)
    out = {}
    for name, t in probe.items():
        flat = t.data.reshape(-1)
        g = np.zeros(flat.size, dtype=dtype)
        indices = range(flat.size) if only is None else only.get(name, ())
        for i in indices:
            orig = flat[i]
            acc = np.zeros((), dtype=dtype)
            for shift, coef in STENCILS[stencil]:
                flat[i] = orig + shift * step
                acc = acc + coef * f(probe).data
            flat[i] = orig
            # difference taken in the probe dtype; casting first would discard its precision
            g[i] = acc / (STENCIL_SCALE[stencil] * step)
        out[name] = g.reshape(t.shape).astype(np.float64)
    return out


def analytic_gradient(f: Callable[[dict], Tensor], params: dict) -> dict:
    for p in params.values():
        p.grad = None
    f(params).backward()
    return {k: (np.zeros(p.shape) if p.grad is None else p.grad.astype(np.float64)) for k, p in params.items()}


def default_eps(fd_dtype, stencil: int = 3) -> float:
    """Step near the truncation/roundoff optimum for the given stencil."""
    unit = float(np.finfo(fd_dtype).eps)
    return 6.0 * unit ** (1.0 / 3.0) if stencil == 3 else 0.2 * unit ** 0.2


def grad_check(f: Callable[[dict], Tensor], params: dict, eps: float | None = None, fd_dtype=np.longdouble) -> float:
    """Worst element-wise relative error between backprop and finite differences.

    ``params`` maps names to leaf tensors that require grad; ``f`` must build
    its graph from them in whatever dtype they carry. The finite-difference
    side is evaluated in ``fd_dtype`` (extended precision where the platform
    has it) so each build is checked against a reference more accurate than
    itself rather than against its own rounding noise.

    Elements where central differences disagree by more than the refine
    threshold are re-estimated with the fourth-order stencil, whose truncation error is
    far smaller on sharply curved losses; the reported error is against that
    refined reference. A wrong backward pass disagrees with both.
    """
    if eps is None:
        eps = default_eps(fd_dtype)
    analytic = analytic_gradient(f, params)
    numeric = numeric_gradient(f, params, eps, fd_dtype)
    suspects = {}
    for name in params:
        flat_err = relative_error(analytic[name], numeric[name]).reshape(-1)
        limit = max(REFINE_FLOOR, 1e3 * float(np.finfo(params[name].dtype).eps))
        idx = np.flatnonzero(flat_err > limit)
        if idx.size:
            suspects[name] = idx
    if suspects:
        refined = numeric_gradient(f, params, default_eps(fd_dtype, 5), fd_dtype, stencil=5, only=suspects)
        for name, idx in suspects.items():
            numeric[name].reshape(-1)[idx] = refined[name].reshape(-1)[idx]
    worst = 0.0
    for name in params:
        err = relative_error(analytic[name], numeric[name])
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
