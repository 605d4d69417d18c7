from ddlm.numerics.gradcheck import analytic_gradient, default_eps, grad_check, numeric_gradient, relative_error
from ddlm.numerics.optim import OptimState, adamw_step
from ddlm.numerics.rng import RandomStream
from ddlm.numerics.tensor import (
    DEFAULT_DTYPE,
    Tensor,
    add,
    embedding,
    masked_cross_entropy,
    matmul,
    mul,
    no_grad,
    parameter,
    reshape,
    rmsnorm,
    rope,
    silu,
    slice_axis1,
    softmax_lastdim,
    transpose,
    tsum,
    zero_grads,
)

__all__ = [
    "analytic_gradient",
    "default_eps",
    "DEFAULT_DTYPE",
    "OptimState",
    "RandomStream",
    "Tensor",
    "adamw_step",
    "add",
    "embedding",
    "grad_check",
    "masked_cross_entropy",
    "matmul",
    "mul",
    "no_grad",
    "numeric_gradient",
    "parameter",
    "relative_error",
    "reshape",
    "rmsnorm",
    "rope",
    "silu",
    "slice_axis1",
    "softmax_lastdim",
    "transpose",
    "tsum",
    "zero_grads",
]
