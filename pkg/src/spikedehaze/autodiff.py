"""Reverse-mode automatic differentiation on dense numpy arrays.

A single global tape records every differentiable operation in execution
order. ``backward`` replays the tape in reverse and accumulates gradients
into the ``grad`` buffers of leaf tensors. Accumulation order is fixed
(reverse execution order), so results are deterministic on one machine.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor", "GraphError", "ShapeError", "tensor", "zeros", "no_grad",
    "clear_tape", "tape_size", "backward",
    "add", "sub", "mul", "div", "neg", "sqrt", "absolute", "square",
    "sum_", "mean", "reshape", "concat", "narrow",
    "gelu", "relu", "softmax", "max_scalar", "floor_at", "stop_gradient",
    "global_avg_pool",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class GraphError(RuntimeError):
    """Misuse of the recorded operation graph (e.g. double backward)."""


class Tensor:
    """Dense array with an optional gradient accumulator.

    ``data`` is owned; callers must not mutate it while a graph that saved
    it is still alive. Gradients accumulate into ``grad`` (same shape as
    ``data``) when ``requires_grad`` is set.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item() requires a single-element tensor")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype if dtype is not None else np.float32)
    return Tensor(arr, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


# --- tape -------------------------------------------------------------------

class _Node:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


_tape: list[_Node] = []
_recording = True


class no_grad:
    """Context manager that suspends tape recording."""

    def __enter__(self):
        global _recording
        self._prev = _recording
        _recording = False
        return self

    def __exit__(self, *exc):
        global _recording
        _recording = self._prev
        return False


def clear_tape():
    _tape.clear()


def tape_size() -> int:
    return len(_tape)


def _record(inputs, output: Tensor, backward_fn):
    """Register a node if recording is on and any input needs gradient."""
    if _recording and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        _tape.append(_Node(inputs, output, backward_fn))
    return output


def backward(loss: Tensor):
    """Accumulate gradients of a scalar loss into every requires_grad leaf.

    Consumes the tape; a second call without new forward work raises.
    """
    if loss.data.size != 1:
        raise ShapeError("backward requires a scalar loss")
    if not loss.requires_grad:
        raise GraphError("loss is detached from the graph")
    produced = any(node.output is loss for node in _tape)
    if not produced:
        raise GraphError("loss was not produced by the current graph "
                         "(backward may have already been called)")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    nodes = list(_tape)
    _tape.clear()
    for node in reversed(nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        input_grads = node.backward_fn(g)
        for t, ig in zip(node.inputs, input_grads):
            if ig is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + ig
            else:
                grads[key] = ig
    # whatever remains belongs to leaves (no producing node)
    leaves = {id(t): t for node in nodes for t in node.inputs}
    for key, g in grads.items():
        leaf = leaves.get(key)
        if leaf is None:
            continue
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
        leaf.grad += g.astype(leaf.data.dtype, copy=False)


# --- helpers ----------------------------------------------------------------

def _as_tensor(x, ref: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=ref.data.dtype))


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to the shape of a broadcast operand."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --- arithmetic -------------------------------------------------------------

def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=b.data.dtype))
    b = _as_tensor(b, a)
    out = Tensor(a.data + b.data)

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record((a, b), out, bwd)


def sub(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=b.data.dtype))
    b = _as_tensor(b, a)
    out = Tensor(a.data - b.data)

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record((a, b), out, bwd)


def mul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=b.data.dtype))
    b = _as_tensor(b, a)
    ad, bd = a.data, b.data
    out = Tensor(ad * bd)

    def bwd(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _record((a, b), out, bwd)


def div(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=b.data.dtype))
    b = _as_tensor(b, a)
    ad, bd = a.data, b.data
    out = Tensor(ad / bd)

    def bwd(g):
        return (_unbroadcast(g / bd, ad.shape),
                _unbroadcast(-g * ad / (bd * bd), bd.shape))

    return _record((a, b), out, bwd)


def neg(x: Tensor) -> Tensor:
    out = Tensor(-x.data)
    return _record((x,), out, lambda g: (-g,))


def sqrt(x: Tensor) -> Tensor:
    r = np.sqrt(x.data)
    out = Tensor(r)
    return _record((x,), out, lambda g: (g * (0.5 / r),))


def square(x: Tensor) -> Tensor:
    out = Tensor(x.data * x.data)
    return _record((x,), out, lambda g: (g * (2.0 * x.data),))


def absolute(x: Tensor) -> Tensor:
    # subgradient 0 at exact zero
    s = np.sign(x.data)
    out = Tensor(np.abs(x.data))
    return _record((x,), out, lambda g: (g * s,))


# --- reductions and shape ---------------------------------------------------

def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return _record((x,), out, bwd)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.data.size
    else:
        n = x.data.shape[axis]
    out = Tensor(x.data.mean(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g / n, x.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / n, x.data.shape).copy(),)

    return _record((x,), out, bwd)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.data.shape
    out = Tensor(x.data.reshape(shape))
    return _record((x,), out, lambda g: (g.reshape(old),))


def concat(tensors, axis: int) -> Tensor:
    tensors = tuple(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    splits = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(tensors, out, bwd)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = Tensor(x.data[idx].copy())

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[idx] = g
        return (gx,)

    return _record((x,), out, bwd)


# --- nonlinearities ---------------------------------------------------------

def gelu(x: Tensor) -> Tensor:
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd * _INV_SQRT2))
    out = Tensor((xd * cdf).astype(xd.dtype))

    def bwd(g):
        pdf = np.exp(-0.5 * xd * xd) * _INV_SQRT_2PI
        return ((g * (cdf + xd * pdf)).astype(xd.dtype),)

    return _record((x,), out, bwd)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0))
    return _record((x,), out, lambda g: (np.where(mask, g, 0),))


def softmax(x: Tensor, axis: int) -> Tensor:
    if x.data.shape[axis] == 0:
        raise ShapeError("softmax along an empty axis")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s)

    def bwd(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - dot),)

    return _record((x,), out, bwd)


def max_scalar(x: Tensor, c: float) -> Tensor:
    """Elementwise max(x, c) for a constant c; gradient flows where x > c."""
    mask = x.data > c
    out = Tensor(np.where(mask, x.data, np.asarray(c, dtype=x.data.dtype)))
    return _record((x,), out, lambda g: (np.where(mask, g, 0),))


def floor_at(x: Tensor, threshold: Tensor) -> Tensor:
    """Elementwise max(x, threshold) with a learnable scalar threshold.

    At ties (x == threshold) the gradient is routed to the threshold.
    """
    if threshold.data.size != 1:
        raise ShapeError("floor_at expects a scalar threshold")
    mask = x.data > threshold.data
    out = Tensor(np.where(mask, x.data, threshold.data))

    def bwd(g):
        gx = np.where(mask, g, 0)
        gt = np.asarray(g[~mask].sum(), dtype=threshold.data.dtype).reshape(
            threshold.data.shape)
        return gx, gt

    return _record((x, threshold), out, bwd)


def stop_gradient(x: Tensor) -> Tensor:
    """Identity forward; blocks gradient flow entirely."""
    return Tensor(x.data.copy(), requires_grad=False)


def global_avg_pool(x: Tensor) -> Tensor:
    """(N, C, H, W) -> (N, C, 1, 1) arithmetic mean over the spatial plane."""
    if x.data.ndim != 4:
        raise ShapeError("global_avg_pool expects a rank-4 tensor")
    n, c, h, w = x.data.shape
    out = Tensor(x.data.mean(axis=(2, 3), keepdims=True))

    def bwd(g):
        return (np.broadcast_to(g / (h * w), x.data.shape).copy(),)

    return _record((x,), out, bwd)
