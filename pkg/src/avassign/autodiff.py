"""Reverse-mode automatic differentiation over dense numpy arrays.

Implements exactly the operations the assignation networks need: matrix
products, broadcast arithmetic, ReLU, concatenation, row gather, and a
max-reduction over edge segments.  Each operation records a backward closure;
``Tensor.backward()`` walks the tape in reverse topological order and
accumulates gradients into every reachable tensor with ``requires_grad``.

Arrays keep whatever float dtype they were created with, so the same code
runs in float32 for training and float64 for gradient checking.
"""

from __future__ import annotations

import numpy as np

from .errors import GraphError, ShapeError


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode gradients."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def backward(self):
        """Backpropagate from a scalar result through the recorded tape."""
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar tensor")
        topo = _topological_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # Convenience operators used when composing layers.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _topological_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
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
            stack.append((parent, False))
    return order


def _result(data, parents, backward_fn):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _accumulate(tensor, grad):
    if not tensor.requires_grad:
        return
    tensor.grad = grad if tensor.grad is None else tensor.grad + grad


def _unbroadcast(grad, shape):
    # Sum a broadcast gradient back down to the original operand shape.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from exc

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _result(data, (a, b), backward)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError as exc:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}") from exc

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _result(data, (a, b), backward)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}") from exc

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _result(data, (a, b), backward)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result(data, (a, b), backward)


def relu(a):
    a = _as_tensor(a)
    mask = a.data > 0
    data = np.where(mask, a.data, a.data.dtype.type(0))

    def backward(g):
        _accumulate(a, np.where(mask, g, g.dtype.type(0)))

    return _result(data, (a,), backward)


def concat(parts, axis=1):
    parts = [_as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def backward(g):
        offset = 0
        for p, size in zip(parts, sizes):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offset, offset + size)
            _accumulate(p, g[tuple(index)])
            offset += size

    return _result(data, tuple(parts), backward)


def gather_rows(a, idx):
    """Select rows ``a[idx]``; the backward pass scatter-adds into ``a``."""
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise GraphError("gather_rows: index out of range")
    data = a.data[idx]

    def backward(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        _accumulate(a, buf)

    return _result(data, (a,), backward)


def segment_max(a, segment_ids, num_segments):
    """Per-segment elementwise maximum over rows of ``a``.

    Row ``r`` of the output is the channel-wise max over all rows ``e`` with
    ``segment_ids[e] == r``.  Every segment must receive at least one row;
    callers guarantee this by materializing self-loop edges.  The gradient is
    routed to the first row attaining the max in each (segment, channel).
    """
    a = _as_tensor(a)
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if a.data.ndim != 2:
        raise ShapeError("segment_max expects a 2-D tensor")
    if segment_ids.shape != (a.data.shape[0],):
        raise ShapeError("segment_max: one segment id per row required")
    counts = np.bincount(segment_ids, minlength=num_segments)
    if np.any(counts == 0):
        missing = int(np.flatnonzero(counts == 0)[0])
        raise GraphError(f"segment_max: segment {missing} has no incoming rows")

    num_rows, channels = a.data.shape
    out = np.full((num_segments, channels), -np.inf, dtype=a.data.dtype)
    np.maximum.at(out, segment_ids, a.data)

    def backward(g):
        # Winner = lowest row index attaining the segment max, per channel.
        hit = a.data == out[segment_ids]
        row_idx = np.broadcast_to(
            np.arange(num_rows, dtype=np.int64)[:, None], (num_rows, channels)
        )
        winner = np.full((num_segments, channels), num_rows, dtype=np.int64)
        np.minimum.at(winner, segment_ids, np.where(hit, row_idx, num_rows))
        buf = np.zeros_like(a.data)
        flat = winner.ravel() * channels + np.tile(np.arange(channels), num_segments)
        np.add.at(buf.ravel(), flat, g.ravel())
        _accumulate(a, buf)

    return _result(out, (a,), backward)
