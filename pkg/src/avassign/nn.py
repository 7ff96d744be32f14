"""Parameter storage and the layer primitives built on the autodiff tape.

The network uses pre-activation blocks (batch normalization, then ReLU, then
a linear map), a two-class softmax cross-entropy with optional node masking,
and bias-corrected ADAM updates.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, _accumulate, _result, add, matmul
from .errors import EmptyBatch, LabelError, NumericsError, ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class ParamStore:
    """Named map of trainable tensors plus their ADAM moments and step count."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, path: str, array) -> Tensor:
        if path in self.params:
            raise ValueError(f"duplicate parameter path {path!r}")
        tensor = Tensor(np.asarray(array), requires_grad=True)
        self.params[path] = tensor
        self.m[path] = np.zeros_like(tensor.data)
        self.v[path] = np.zeros_like(tensor.data)
        return tensor

    def __getitem__(self, path: str) -> Tensor:
        return self.params[path]

    def __contains__(self, path: str) -> bool:
        return path in self.params

    def paths(self) -> list[str]:
        return sorted(self.params)

    def grads(self) -> dict[str, np.ndarray]:
        """Current gradients, with untouched parameters mapped to zeros."""
        out = {}
        for path, tensor in self.params.items():
            grad = tensor.grad
            out[path] = np.zeros_like(tensor.data) if grad is None else grad
        return out

    def zero_grads(self) -> None:
        for tensor in self.params.values():
            tensor.grad = None


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ weight + bias`` with shape validation."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ShapeError("linear expects 2-D input and weight")
    if x.data.shape[1] != weight.data.shape[0]:
        raise ShapeError(
            f"linear: input dim {x.data.shape[1]} vs weight {weight.data.shape}"
        )
    if bias.data.shape != (weight.data.shape[1],):
        raise ShapeError(f"linear: bias shape {bias.data.shape}")
    return add(matmul(x, weight), bias)


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> Tensor:
    """Per-channel batch normalization with an affine transform.

    Training mode normalizes with the batch mean and (population) variance of
    the current rows and folds those statistics into the running buffers in
    place, ``running = (1 - momentum) * running + momentum * batch``.  Eval
    mode normalizes with the running buffers only.
    """
    if x.data.ndim != 2:
        raise ShapeError("batchnorm expects a 2-D tensor")
    n, channels = x.data.shape
    if n == 0:
        raise EmptyBatch("batchnorm over zero rows")
    if gamma.data.shape != (channels,) or beta.data.shape != (channels,):
        raise ShapeError("batchnorm: affine parameters must match channel count")

    dtype = x.data.dtype
    if training:
        mean = x.data.mean(axis=0)
        centered = x.data - mean
        var = np.mean(centered * centered, axis=0)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean.astype(dtype, copy=False)
        var = running_var.astype(dtype, copy=False)
        centered = x.data - mean

    inv_std = 1.0 / np.sqrt(var + dtype.type(eps))
    xhat = centered * inv_std
    data = gamma.data * xhat + beta.data

    def backward(g):
        _accumulate(gamma, (g * xhat).sum(axis=0))
        _accumulate(beta, g.sum(axis=0))
        if not x.requires_grad:
            return
        dxhat = g * gamma.data
        if training:
            # Gradient through the batch statistics themselves.
            dvar = (dxhat * centered).sum(axis=0) * (-0.5) * inv_std**3
            dmean = (-dxhat * inv_std).sum(axis=0) + dvar * (-2.0 / n) * centered.sum(
                axis=0
            )
            dx = dxhat * inv_std + dvar * (2.0 / n) * centered + dmean / n
        else:
            dx = dxhat * inv_std
        _accumulate(x, dx)

    return _result(data, (x, gamma, beta), backward)


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a plain logits array (no gradient tracking)."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits: Tensor, labels, mask=None) -> Tensor:
    """Mean cross-entropy of row-wise softmax against integer labels.

    ``mask``, when given, selects the rows that participate; the mean runs
    over selected rows only and unselected rows receive zero gradient.  The
    gradient on a selected row is ``(softmax - onehot) / n_selected``.
    """
    if logits.data.ndim != 2:
        raise ShapeError("softmax_xent expects 2-D logits")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (logits.data.shape[0],):
        raise ShapeError("softmax_xent: one label per row required")
    num_classes = logits.data.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelError(f"labels must lie in [0, {num_classes})")

    if mask is None:
        selected = np.arange(logits.data.shape[0])
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (logits.data.shape[0],):
            raise ShapeError("softmax_xent: one mask entry per row required")
        selected = np.flatnonzero(mask)

    dtype = logits.data.dtype
    if selected.size == 0:
        return Tensor(np.asarray(dtype.type(0.0)))

    z = logits.data[selected]
    y = labels[selected]
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    losses = lse - z[np.arange(selected.size), y]
    data = np.asarray(losses.mean(), dtype=dtype)

    def backward(g):
        p = softmax_probs(z)
        p[np.arange(selected.size), y] -= 1.0
        p *= g / selected.size
        full = np.zeros_like(logits.data)
        full[selected] = p
        _accumulate(logits, full)

    return _result(data, (logits,), backward)


def adam_step(
    store: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected ADAM update over every parameter in the store.

    Gradients are validated up front; a non-finite entry aborts the step
    before any parameter or moment is touched.
    """
    for path in store.params:
        if path not in grads:
            raise ShapeError(f"missing gradient for {path!r}")
        if grads[path].shape != store.params[path].data.shape:
            raise ShapeError(f"gradient shape mismatch for {path!r}")
        if not np.all(np.isfinite(grads[path])):
            raise NumericsError(f"non-finite gradient for {path!r}")

    store.step += 1
    t = store.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for path, tensor in store.params.items():
        g = grads[path]
        store.m[path] = beta1 * store.m[path] + (1.0 - beta1) * g
        store.v[path] = beta2 * store.v[path] + (1.0 - beta2) * g * g
        m_hat = store.m[path] / bc1
        v_hat = store.v[path] / bc2
        tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)
