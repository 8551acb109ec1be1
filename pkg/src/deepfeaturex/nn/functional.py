"""Differentiable layer primitives.

Convolutions are cross-correlations (no kernel flip) computed per sample with
im2col + matmul, so a sample's result never depends on the batch it sits in.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import EmptyBatch, KernelTooLarge, ShapeMismatch
from .tensor import Tensor, record


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def conv_output_length(n: int, k: int, pad: int, stride: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, pad: int = 0, stride: int = 1) -> Tensor:
    x, weight = _as_tensor(x), _as_tensor(weight)
    unbatched = x.ndim == 3
    xd = x.data[None] if unbatched else x.data
    if xd.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatch(f"conv2d expects (N,C,H,W) input and (O,C,k,k) weight, got {x.shape} and {weight.shape}")
    n, c_in, h, w = xd.shape
    c_out, wc, kh, kw = weight.shape
    if wc != c_in:
        raise ShapeMismatch(f"input has {c_in} channels, weight expects {wc}")
    if stride < 1 or pad < 0:
        raise ShapeMismatch("stride must be >= 1 and pad >= 0")
    if kh > h + 2 * pad or kw > w + 2 * pad:
        raise KernelTooLarge(f"kernel {kh}x{kw} exceeds padded input {h + 2 * pad}x{w + 2 * pad}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeMismatch(f"bias shape {bias.shape} != ({c_out},)")

    ho = conv_output_length(h, kh, pad, stride)
    wo = conv_output_length(w, kw, pad, stride)
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xd
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # (N, Ho, Wo, C, kh, kw) -> per-sample (Ho*Wo, C*kh*kw)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n, ho * wo, c_in * kh * kw)
    wmat = weight.data.reshape(c_out, -1)
    out = np.empty((n, c_out, ho * wo), dtype=np.result_type(xd, weight.data))
    for i in range(n):
        out[i] = (cols[i] @ wmat.T).T
    if bias is not None:
        out += bias.data[None, :, None]
    out = out.reshape(n, c_out, ho, wo)

    parents = (x, weight) if bias is None else (x, weight, bias)
    res = record(out[0] if unbatched else out, parents)
    if res._parents:
        def backward(g):
            g = g[None] if unbatched else g
            gm = g.reshape(n, c_out, ho * wo)
            if weight.requires_grad:
                gw = np.zeros_like(wmat, dtype=gm.dtype)
                for i in range(n):
                    gw += gm[i] @ cols[i]
                weight.accumulate_grad(gw.reshape(weight.shape))
            if bias is not None and bias.requires_grad:
                bias.accumulate_grad(gm.sum(axis=(0, 2)))
            if x.requires_grad:
                gcols = np.empty((n, ho * wo, wmat.shape[1]), dtype=gm.dtype)
                for i in range(n):
                    gcols[i] = gm[i].T @ wmat
                gcols = gcols.reshape(n, ho, wo, c_in, kh, kw)
                gxp = np.zeros(xp.shape, dtype=gm.dtype)
                for a in range(kh):
                    for b in range(kw):
                        gxp[:, :, a:a + stride * ho:stride, b:b + stride * wo:stride] += gcols[:, :, :, :, a, b].transpose(0, 3, 1, 2)
                gx = gxp[:, :, pad:pad + h, pad:pad + w] if pad else gxp
                x.accumulate_grad(gx[0] if unbatched else gx)
        res._backward = backward
    return res


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, pad: int = 1, stride: int = 1) -> Tensor:
    x, weight = _as_tensor(x), _as_tensor(weight)
    unbatched = x.ndim == 2
    xd = x.data[None] if unbatched else x.data
    if xd.ndim != 3 or weight.ndim != 3:
        raise ShapeMismatch(f"conv1d expects (N,C,L) input and (O,C,k) weight, got {x.shape} and {weight.shape}")
    n, c_in, length = xd.shape
    c_out, wc, k = weight.shape
    if wc != c_in:
        raise ShapeMismatch(f"input has {c_in} channels, weight expects {wc}")
    if stride < 1 or pad < 0:
        raise ShapeMismatch("stride must be >= 1 and pad >= 0")
    if k > length + 2 * pad:
        raise KernelTooLarge(f"kernel {k} exceeds padded length {length + 2 * pad}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeMismatch(f"bias shape {bias.shape} != ({c_out},)")

    lo = conv_output_length(length, k, pad, stride)
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad))) if pad else xd
    win = sliding_window_view(xp, k, axis=2)[:, :, ::stride][:, :, :lo]  # (N, C, Lo, k)
    cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(n, lo, c_in * k)
    wmat = weight.data.reshape(c_out, -1)
    out = np.empty((n, c_out, lo), dtype=np.result_type(xd, weight.data))
    for i in range(n):
        out[i] = (cols[i] @ wmat.T).T
    if bias is not None:
        out += bias.data[None, :, None]

    parents = (x, weight) if bias is None else (x, weight, bias)
    res = record(out[0] if unbatched else out, parents)
    if res._parents:
        def backward(g):
            g = g[None] if unbatched else g
            if weight.requires_grad:
                gw = np.zeros_like(wmat, dtype=g.dtype)
                for i in range(n):
                    gw += g[i] @ cols[i]
                weight.accumulate_grad(gw.reshape(weight.shape))
            if bias is not None and bias.requires_grad:
                bias.accumulate_grad(g.sum(axis=(0, 2)))
            if x.requires_grad:
                gcols = np.empty((n, lo, wmat.shape[1]), dtype=g.dtype)
                for i in range(n):
                    gcols[i] = g[i].T @ wmat
                gcols = gcols.reshape(n, lo, c_in, k)
                gxp = np.zeros(xp.shape, dtype=g.dtype)
                for a in range(k):
                    gxp[:, :, a:a + stride * lo:stride] += gcols[:, :, :, a].transpose(0, 2, 1)
                gx = gxp[:, :, pad:pad + length] if pad else gxp
                x.accumulate_grad(gx[0] if unbatched else gx)
        res._backward = backward
    return res


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    res = record(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,))
    if res._parents:
        res._backward = lambda g: x.accumulate_grad(g * mask)
    return res


def avg_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping average pooling; trailing rows/cols that do not fill a window are dropped."""
    x = _as_tensor(x)
    *lead, h, w = x.shape
    ho, wo = h // size, w // size
    if ho == 0 or wo == 0:
        raise ShapeMismatch(f"cannot pool {h}x{w} with window {size}")
    crop = x.data[..., : ho * size, : wo * size]
    out = crop.reshape(*lead, ho, size, wo, size).mean(axis=(-3, -1))
    res = record(out, (x,))
    if res._parents:
        def backward(g):
            gx = np.zeros(x.shape, dtype=g.dtype)
            up = np.repeat(np.repeat(g, size, axis=-2), size, axis=-1) / (size * size)
            gx[..., : ho * size, : wo * size] = up
            x.accumulate_grad(gx)
        res._backward = backward
    return res


def global_avg_pool(x: Tensor, channel_axis: int = 0) -> Tensor:
    """Mean over every axis after ``channel_axis``; (C, ...) -> (C,), (N, C, ...) -> (N, C) with channel_axis=1."""
    x = _as_tensor(x)
    axes = tuple(range(channel_axis + 1, x.ndim))
    if not axes:
        raise ShapeMismatch("global_avg_pool needs at least one non-channel axis")
    count = int(np.prod([x.shape[a] for a in axes]))
    out = x.data.sum(axis=axes, dtype=np.float64) / count
    res = record(out.astype(x.dtype), (x,))
    if res._parents:
        shape = x.shape
        expand = (...,) + (None,) * len(axes)

        def backward(g):
            x.accumulate_grad(np.broadcast_to(g[expand] / count, shape))
        res._backward = backward
    return res


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    x, weight = _as_tensor(x), _as_tensor(weight)
    if weight.ndim != 2 or x.ndim not in (1, 2) or x.shape[-1] != weight.shape[1]:
        raise ShapeMismatch(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeMismatch(f"bias shape {bias.shape} != ({weight.shape[0]},)")
    xd = x.data if x.ndim == 2 else x.data[None]
    out = np.stack([weight.data @ row for row in xd])
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)
    res = record(out if x.ndim == 2 else out[0], parents)
    if res._parents:
        def backward(g):
            g2 = g if g.ndim == 2 else g[None]
            if weight.requires_grad:
                weight.accumulate_grad(g2.T @ xd)
            if bias is not None and bias.requires_grad:
                bias.accumulate_grad(g2.sum(axis=0))
            if x.requires_grad:
                gx = g2 @ weight.data
                x.accumulate_grad(gx if x.ndim == 2 else gx[0])
        res._backward = backward
    return res


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits: Tensor, targets: Sequence[int], class_weights: Sequence[float] | None = None) -> Tensor:
    """-(1/N) * sum_i w[y_i] * log softmax(z_i)[y_i]; uniform weights give the plain mean NLL."""
    logits = _as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeMismatch(f"logits must be (N, K), got {logits.shape}")
    n, k = logits.shape
    if n == 0:
        raise EmptyBatch("cross-entropy over an empty batch")
    y = np.asarray(targets, dtype=np.int64)
    if y.shape != (n,) or (y < 0).any() or (y >= k).any():
        raise ShapeMismatch(f"targets must be {n} class indices in [0, {k})")
    w = np.ones(k) if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    if w.shape != (k,):
        raise ShapeMismatch(f"need {k} class weights, got {w.shape}")
    logp = log_softmax(logits.data)
    wi = w[y]
    loss = -(wi * logp[np.arange(n), y]).sum() / n
    res = record(np.asarray(loss, dtype=np.float64), (logits,))
    if res._parents:
        def backward(g):
            p = np.exp(logp)
            p[np.arange(n), y] -= 1.0
            logits.accumulate_grad((float(g) / n) * wi[:, None] * p)
        res._backward = backward
    return res
