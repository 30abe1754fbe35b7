"""Differentiable operations on :class:`~spikebridge.tensor.Tensor`.

Each op computes its forward value eagerly (through the kernel dispatch layer
for the hot paths) and records a backward rule. Elementwise ops require equal
shapes or a python scalar; the only broadcast in the package is the bias row
inside :func:`dense`, whose backward sums over the batch axis.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ContractError, DimensionError
from .tensor import Tensor, accumulate_grad, make_node


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    if isinstance(b, (int, float)):
        out = a.data + float(b)

        def backward(g):
            accumulate_grad(a, g)

        return make_node(out, (a,), backward, "add")
    b = _as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"add shapes differ: {a.shape} vs {b.shape}")
    out = a.data + b.data

    def backward(g):
        accumulate_grad(a, g)
        accumulate_grad(b, g)

    return make_node(out, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    if isinstance(b, (int, float)):
        bv = float(b)
        out = a.data * bv

        def backward(g):
            accumulate_grad(a, g * bv)

        return make_node(out, (a,), backward, "mul")
    b = _as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"mul shapes differ: {a.shape} vs {b.shape}")
    out = a.data * b.data

    def backward(g):
        accumulate_grad(a, g * b.data)
        accumulate_grad(b, g * a.data)

    return make_node(out, (a, b), backward, "mul")


def reshape(x: Tensor, shape) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(int(s) for s in shape)
    out = x.data.reshape(shape)

    def backward(g):
        accumulate_grad(x, g.reshape(x.data.shape))

    return make_node(out, (x,), backward, "reshape")


def flatten(x: Tensor) -> Tensor:
    """Collapse all axes after the first (batch) axis."""
    x = _as_tensor(x)
    return reshape(x, (x.shape[0], -1) if x.ndim > 1 else (x.size,))


def transpose(x: Tensor, axes) -> Tensor:
    x = _as_tensor(x)
    axes = tuple(axes)
    inv = np.argsort(axes)
    out = x.data.transpose(axes)

    def backward(g):
        accumulate_grad(x, g.transpose(inv))

    return make_node(out, (x,), backward, "transpose")


def sum_(x: Tensor, axis=None) -> Tensor:
    x = _as_tensor(x)
    out = x.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            accumulate_grad(x, np.broadcast_to(g, x.data.shape))
        else:
            accumulate_grad(x, np.broadcast_to(np.expand_dims(g, axis), x.data.shape))

    return make_node(out, (x,), backward, "sum")


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = np.maximum(x.data, 0.0)

    def backward(g):
        accumulate_grad(x, g * (x.data > 0.0))

    return make_node(out, (x,), backward, "relu")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = kernels.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            accumulate_grad(a, kernels.matmul(g, b.data.T))
        if b.requires_grad:
            accumulate_grad(b, kernels.matmul(a.data.T, g))

    return make_node(out, (a, b), backward, "matmul")


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map ``x @ w + b`` with the bias row broadcast over the batch."""
    x = _as_tensor(x)
    w = _as_tensor(w)
    b = _as_tensor(b)
    if b.shape != (w.shape[1],):
        raise DimensionError(f"dense bias shape {b.shape} does not match weight columns {w.shape}")
    y = matmul(x, w)
    out = y.data + b.data[None, :]

    def backward(g):
        accumulate_grad(y, g)
        accumulate_grad(b, g.sum(axis=0))

    return make_node(out, (y, b), backward, "dense")


def conv2d(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (C,H,W) or (B,C,H,W) with ``w`` (F,C,k,k)."""
    x = _as_tensor(x)
    w = _as_tensor(w)
    if stride < 1:
        raise ContractError(f"conv2d stride must be >= 1, got {stride}")
    if w.ndim != 4:
        raise DimensionError(f"conv2d weight must be 4-D (F,C,kh,kw), got {w.shape}")
    squeeze = x.ndim == 3
    xb = x.data[None] if squeeze else x.data
    if xb.ndim != 4:
        raise DimensionError(f"conv2d input must be (C,H,W) or (B,C,H,W), got {x.shape}")
    B, C, H, W = xb.shape
    F, Cw, kh, kw = w.shape
    if C != Cw:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape} vs weight {w.shape}")
    if kh > H + 2 * pad or kw > W + 2 * pad:
        raise DimensionError(
            f"conv2d kernel {kh}x{kw} larger than padded input {H + 2 * pad}x{W + 2 * pad}"
        )
    xp = np.pad(xb, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xb
    out = kernels.conv2d_forward(xp, w.data, stride)

    def backward(g):
        gb = g[None] if squeeze else g
        if w.requires_grad:
            accumulate_grad(w, kernels.conv2d_grad_w(xp, gb, kh, kw, stride))
        if x.requires_grad:
            dxp = kernels.conv2d_grad_x(gb, w.data, xp.shape[2], xp.shape[3], stride)
            dx = dxp[:, :, pad : pad + H, pad : pad + W] if pad else dxp
            accumulate_grad(x, dx[0] if squeeze else dx)

    return make_node(out[0] if squeeze else out, (x, w), backward, "conv2d")


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2; ties broken toward the lowest window index."""
    x = _as_tensor(x)
    squeeze = x.ndim == 3
    xb = x.data[None] if squeeze else x.data
    if xb.ndim != 4:
        raise DimensionError(f"maxpool2d input must be (C,H,W) or (B,C,H,W), got {x.shape}")
    if xb.shape[2] % 2 or xb.shape[3] % 2:
        raise DimensionError(f"maxpool2d needs even spatial dims, got {x.shape}")
    out, idx = kernels.maxpool2x2_forward(xb)

    def backward(g):
        gb = g[None] if squeeze else g
        dx = kernels.maxpool2x2_backward(gb, idx)
        accumulate_grad(x, dx[0] if squeeze else dx)

    return make_node(out[0] if squeeze else out, (x,), backward, "maxpool2d")


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy over a batch of (B, K) logits and int labels."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise DimensionError(f"softmax_cross_entropy expects (B, K) logits, got {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise DimensionError(
            f"labels shape {labels.shape} does not match batch of {logits.shape[0]}"
        )
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    log_probs = (z - zmax) - np.log(ez.sum(axis=1, keepdims=True))
    B = z.shape[0]
    loss = -log_probs[np.arange(B), labels].sum() / B

    def backward(g):
        probs = ez / ez.sum(axis=1, keepdims=True)
        probs[np.arange(B), labels] -= 1.0
        accumulate_grad(logits, g * probs / B)

    return make_node(np.float64(loss), (logits,), backward, "softmax_cross_entropy")
