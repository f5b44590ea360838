"""Reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tensor` wraps an ndarray plus an optional record of the op that
produced it (parent tensors and a closure mapping the upstream gradient to
per-parent gradients). ``backward()`` walks the recorded graph once in
reverse topological order and accumulates gradients, so a tensor used by
several downstream ops receives the sum of their contributions.

Only the ops the model needs are implemented; each one states its gradient
inline. Heavy fused ops (LSTM layer, masked softmax) delegate to
:mod:`skelgait.kernels` so the numba/numpy backend choice applies to both
passes.
"""

from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import DimensionMismatch, EmptyNeighborhood, GraphNotRecorded


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents)
        self._backward_fn = backward_fn

    # -- graph traversal ----------------------------------------------------

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable ``grad`` slot."""
        if not self.requires_grad:
            raise GraphNotRecorded(
                "backward() on a tensor with no recorded computation graph"
            )
        if seed is None:
            if self.data.size != 1:
                raise DimensionMismatch("backward() without a seed needs a scalar")
            seed = np.ones_like(self.data)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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

        self.grad = seed if self.grad is None else self.grad + seed
        for node in reversed(order):
            if node._backward_fn is None or node.grad is None:
                continue
            for parent, pg in zip(node._parents, node._backward_fn(node.grad)):
                if parent.requires_grad and pg is not None:
                    parent.grad = pg if parent.grad is None else parent.grad + pg

    # -- conveniences --------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def mT(self):
        return transpose_last2(self)

    def item(self) -> float:
        return float(self.data)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None):
        return tensor_mean(self, axis=axis)

    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), scale(self, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(data, parents: Sequence[Tensor], backward_fn) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn)
    return Tensor(data)


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(g):
        return unbroadcast(g, a.data.shape), unbroadcast(g, b.data.shape)

    return _record(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bwd(g):
        return unbroadcast(g * b.data, a.data.shape), unbroadcast(g * a.data, b.data.shape)

    return _record(out, (a, b), bwd)


def scale(a: Tensor, s: float) -> Tensor:
    out = a.data * s

    def bwd(g):
        return (g * s,)

    return _record(out, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionMismatch("matmul operands must have ndim >= 2")
    out = a.data @ b.data

    def bwd(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(ga, a.data.shape), unbroadcast(gb, b.data.shape)

    return _record(out, (a, b), bwd)


def transpose_last2(a: Tensor) -> Tensor:
    out = np.swapaxes(a.data, -1, -2)

    def bwd(g):
        return (np.swapaxes(g, -1, -2),)

    return _record(out, (a,), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)

    def bwd(g):
        return (g.reshape(a.data.shape),)

    return _record(out, (a,), bwd)


def narrow(a: Tensor, start: int, length: int) -> Tensor:
    """Slice ``a[start:start+length]`` along axis 0."""
    if start < 0 or start + length > a.data.shape[0]:
        raise DimensionMismatch("narrow slice outside the tensor")
    out = a.data[start : start + length]

    def bwd(g):
        full = np.zeros_like(a.data)
        full[start : start + length] = g
        return (full,)

    return _record(out, (a,), bwd)


def take(a: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    """Gather rows along ``axis``; the gradient scatter-adds them back."""
    idx = np.asarray(indices, dtype=np.intp)
    out = np.take(a.data, idx, axis=axis)

    def bwd(g):
        full = np.zeros_like(a.data)
        target = np.moveaxis(full, axis, 0)
        np.add.at(target, idx, np.moveaxis(g, axis, 0))
        return (full,)

    return _record(out, (a,), bwd)


def take_frames(x: Tensor, frame_indices: np.ndarray) -> Tensor:
    """Per-row gather: x (N, T, ...) and indices (N, k) -> (N, k, ...)."""
    idx = np.asarray(frame_indices, dtype=np.intp)
    if idx.ndim != 2 or x.data.ndim < 2 or idx.shape[0] != x.data.shape[0]:
        raise DimensionMismatch("take_frames expects x (N, T, ...) and indices (N, k)")
    rows = np.arange(x.data.shape[0], dtype=np.intp)[:, None]
    out = x.data[rows, idx]

    def bwd(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (rows, idx), g)
        return (full,)

    return _record(out, (x,), bwd)


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape),)

    return _record(out, (a,), bwd)


def tensor_mean(a: Tensor, axis=None) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return scale(tensor_sum(a, axis=axis), 1.0 / count)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return _record(out, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    out = kernels._sigmoid_np(a.data)

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _record(out, (a,), bwd)


def elu(a: Tensor) -> Tensor:
    x = a.data
    neg = np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0.0, x, neg)

    def bwd(g):
        return (g * np.where(x > 0.0, 1.0, neg + 1.0),)

    return _record(out, (a,), bwd)


def leaky_relu(a: Tensor, slope: float) -> Tensor:
    x = a.data
    out = np.where(x > 0.0, x, slope * x)

    def bwd(g):
        return (g * np.where(x > 0.0, 1.0, slope),)

    return _record(out, (a,), bwd)


def log_clipped(a: Tensor, floor: float = 1e-12) -> Tensor:
    """log(max(x, floor)); gradient is 0 where the clip is active."""
    x = a.data
    out = np.log(np.maximum(x, floor))

    def bwd(g):
        return (np.where(x > floor, g / np.maximum(x, floor), 0.0),)

    return _record(out, (a,), bwd)


# ---------------------------------------------------------------------------
# fused kernel ops
# ---------------------------------------------------------------------------


def masked_softmax(logits: Tensor, mask: np.ndarray | None) -> Tensor:
    """Row softmax over the last axis, restricted to ``mask`` when given.

    ``mask`` is a boolean array broadcastable to ``logits`` and is data, not a
    differentiable input. Off-mask outputs are exactly zero.
    """
    data = logits.data
    n = data.shape[-1]
    rows = np.ascontiguousarray(data.reshape(-1, n))
    if mask is None:
        mask_rows = np.ones_like(rows, dtype=bool)
    else:
        mask_b = np.broadcast_to(np.asarray(mask, dtype=bool), data.shape)
        if not mask_b.any(axis=-1).all():
            raise EmptyNeighborhood("softmax row with no unmasked entries")
        mask_rows = np.ascontiguousarray(mask_b.reshape(-1, n))
    probs = kernels.ACTIVE.masked_softmax(rows, mask_rows)
    out = probs.reshape(data.shape)

    def bwd(g):
        flat = kernels.ACTIVE.masked_softmax_grad(
            probs, np.ascontiguousarray(g.reshape(-1, n))
        )
        return (flat.reshape(data.shape),)

    return _record(out, (logits,), bwd)


def lstm_layer(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """One LSTM layer over x (batch, steps, features), zero initial state.

    Gate blocks along the 4H axis of ``wx``/``wh``/``b`` are ordered
    input, forget, cell, output; returns the full hidden sequence
    (batch, steps, hidden).
    """
    if x.data.ndim != 3:
        raise DimensionMismatch("lstm_layer expects x with shape (batch, steps, features)")
    batch, steps, nin = x.data.shape
    if wx.data.ndim != 2 or wx.data.shape[1] != nin or wx.data.shape[0] % 4:
        raise DimensionMismatch("wx must have shape (4*hidden, features)")
    hidden = wx.data.shape[0] // 4
    if wh.data.shape != (4 * hidden, hidden) or b.data.shape != (4 * hidden,):
        raise DimensionMismatch("wh/b shapes do not match wx")

    xt = np.ascontiguousarray(np.swapaxes(x.data, 0, 1))
    h0 = np.zeros((batch, hidden))
    c0 = np.zeros((batch, hidden))
    h, c, gi, gf, gg, go, tc = kernels.ACTIVE.lstm_forward(
        xt, wx.data, wh.data, b.data, h0, c0
    )
    out = np.ascontiguousarray(np.swapaxes(h, 0, 1))

    def bwd(g):
        dh_out = np.ascontiguousarray(np.swapaxes(g, 0, 1))
        dx, dwx, dwh, db, _, _ = kernels.ACTIVE.lstm_backward(
            dh_out, xt, h, c, gi, gf, gg, go, tc, wx.data, wh.data, h0, c0
        )
        return np.ascontiguousarray(np.swapaxes(dx, 0, 1)), dwx, dwh, db

    return _record(out, (x, wx, wh, b), bwd)


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight.T + bias with weight stored (out_features, in_features)."""
    return add(matmul(x, transpose_last2(weight)), bias)


def total_sum(tensors: Iterable[Tensor]) -> Tensor:
    """Tape-recorded sum of already-scalar tensors."""
    acc = None
    for t in tensors:
        acc = t if acc is None else add(acc, t)
    if acc is None:
        raise DimensionMismatch("total_sum needs at least one tensor")
    return acc
