"""Dense arrays with reverse-mode automatic differentiation.

Every differentiable operation returns a new :class:`Tensor` whose ``_parents``
tuple and ``_backward`` closure record how to push an upstream gradient to its
inputs. :meth:`Tensor.backward` walks that graph in reverse topological order.
Gradients accumulate into ``.grad``; callers zero them between steps.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ddlm.errors import DataError, DimensionError, NumericError, UsageError

DEFAULT_DTYPE = np.float32
RMS_EPS = 1e-6

_grad_enabled = True


class no_grad:
    """Context manager that stops graph recording (inference only)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _as_array(value, dtype=None) -> np.ndarray:
    arr = np.asarray(value)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype.kind != "f":
        return arr.astype(DEFAULT_DTYPE)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        dtype=None,
        name: str | None = None,
        _parents: tuple = (),
        _backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward

    # -- basic properties ------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.dtype)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.dtype, copy=True)
        else:
            self.grad += g

    # -- graph construction ----------------------------------------------
    @staticmethod
    def _make(data, parents: Sequence["Tensor"], backward) -> "Tensor":
        track = _grad_enabled and any(p.requires_grad for p in parents)
        if not track:
            return Tensor(data)
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)

    def backward(self, grad: np.ndarray | None = None):
        if grad is None:
            if self.data.size != 1:
                raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in node._backward(g):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operators --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, -_wrap(other, self.dtype))

    def __rsub__(self, other):
        return add(_wrap(other, self.dtype), -self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise UsageError("division by a Tensor is not supported; multiply by a constant")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)


def _wrap(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def parameter(data, name: str | None = None, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype, name=name)


# ---------------------------------------------------------------------------
# elementwise and shape ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a = _wrap(a, None if not isinstance(b, Tensor) else b.dtype)
    b = _wrap(b, a.dtype)
    out = a.data + b.data

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape)))

    return Tensor._make(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _wrap(a, None if not isinstance(b, Tensor) else b.dtype)
    b = _wrap(b, a.dtype)
    out = a.data * b.data

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ((a, ga), (b, gb))

    return Tensor._make(out, (a, b), backward)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((x, np.broadcast_to(g, x.shape).astype(x.dtype)),)

    return Tensor._make(out, (x,), backward)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    out = x.data.reshape(shape)

    def backward(g):
        return ((x, g.reshape(x.shape)),)

    return Tensor._make(out, (x,), backward)


def transpose(x: Tensor, axes: tuple | None = None) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    out = x.data.transpose(axes)

    def backward(g):
        return ((x, g.transpose(inverse)),)

    return Tensor._make(out, (x,), backward)


def slice_axis1(x: Tensor, start: int, stop: int) -> Tensor:
    """``x[:, start:stop]`` with gradient scattered back into place."""
    out = np.ascontiguousarray(x.data[:, start:stop])

    def backward(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return ((x, full),)

    return Tensor._make(out, (x,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul batch extents not broadcastable: {a.shape} @ {b.shape}") from None
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if b.requires_grad else None
        return ((a, ga), (b, gb))

    return Tensor._make(out, (a, b), backward)


# ---------------------------------------------------------------------------
# neural network primitives
# ---------------------------------------------------------------------------


def softmax_lastdim(x: Tensor) -> Tensor:
    if x.ndim == 0 or x.shape[-1] < 1:
        raise DimensionError(f"softmax needs a non-empty last axis, got {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax input contains non-finite values")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return ((x, y * (g - (g * y).sum(axis=-1, keepdims=True))),)

    return Tensor._make(y, (x,), backward)


def silu(x: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-x.data))
    out = x.data * s

    def backward(g):
        return ((x, g * (s * (1.0 + x.data * (1.0 - s)))),)

    return Tensor._make(out, (x,), backward)


def rmsnorm(x: Tensor, gain: Tensor, eps: float = RMS_EPS) -> Tensor:
    if gain.ndim != 1 or gain.shape[0] != x.shape[-1]:
        raise DimensionError(f"rmsnorm gain shape {gain.shape} does not match last extent of {x.shape}")
    inv = 1.0 / np.sqrt((x.data * x.data).mean(axis=-1, keepdims=True) + eps)
    xhat = x.data * inv
    out = xhat * gain.data

    def backward(g):
        gg = None
        if gain.requires_grad:
            gg = (g * xhat).reshape(-1, gain.shape[0]).sum(axis=0)
        gx = None
        if x.requires_grad:
            dxhat = g * gain.data
            gx = inv * (dxhat - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return ((x, gx), (gain, gg))

    return Tensor._make(out, (x, gain), backward)


def embedding(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise DataError(f"token ids must be integers, got dtype {ids.dtype}")
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise DataError(f"token id out of range [0, {vocab})")
    out = table.data[ids]

    def backward(g):
        flat = ids.reshape(-1)
        onehot = np.zeros((flat.size, vocab), dtype=table.dtype)
        onehot[np.arange(flat.size), flat] = 1.0
        return ((table, onehot.T @ g.reshape(flat.size, -1)),)

    return Tensor._make(out, (table,), backward)


def _rotate_half(a: np.ndarray) -> np.ndarray:
    half = a.shape[-1] // 2
    return np.concatenate([-a[..., half:], a[..., :half]], axis=-1)


def _rotate_half_transpose(a: np.ndarray) -> np.ndarray:
    half = a.shape[-1] // 2
    return np.concatenate([a[..., half:], -a[..., :half]], axis=-1)


def rope(x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Rotary position encoding on the last axis (half-split pairing)."""
    if x.shape[-1] % 2:
        raise DimensionError(f"rotary encoding needs an even head dimension, got {x.shape[-1]}")
    cos = cos.astype(x.dtype, copy=False)
    sin = sin.astype(x.dtype, copy=False)
    out = x.data * cos + _rotate_half(x.data) * sin

    def backward(g):
        return ((x, g * cos + _rotate_half_transpose(g * sin)),)

    return Tensor._make(out, (x,), backward)


def masked_cross_entropy(logits: Tensor, targets, weights) -> Tensor:
    """Weighted sum of token negative log-likelihoods.

    Rows with weight 0 are skipped entirely: they add exactly 0 to the loss
    and receive an exactly-zero gradient.
    """
    if logits.ndim != 2:
        raise DimensionError(f"logits must be [N, V], got {logits.shape}")
    n, vocab = logits.shape
    targets = np.asarray(targets).reshape(-1)
    weights = np.asarray(weights, dtype=logits.dtype).reshape(-1)
    if targets.shape[0] != n or weights.shape[0] != n:
        raise DimensionError(
            f"targets {targets.shape} / weights {weights.shape} do not match logits rows {n}"
        )
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise DataError(f"target id out of range [0, {vocab})")
    if np.any(weights < 0):
        raise DataError("cross-entropy weights must be non-negative")
    rows = np.flatnonzero(weights)
    sub = logits.data[rows]
    m = sub.max(axis=-1, keepdims=True)
    e = np.exp(sub - m)
    z = e.sum(axis=-1, keepdims=True)
    nll = (np.log(z) + m)[:, 0] - sub[np.arange(rows.size), targets[rows]]
    w = weights[rows]
    out = np.asarray((w * nll).sum(), dtype=logits.dtype)

    def backward(g):
        probs = e / z
        probs[np.arange(rows.size), targets[rows]] -= 1.0
        full = np.zeros_like(logits.data)
        full[rows] = probs * (w * g)[:, None]
        return ((logits, full),)

    return Tensor._make(out, (logits,), backward)


def zero_grads(params: Iterable[Tensor]):
    for p in params:
        p.grad = None
