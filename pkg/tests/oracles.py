"""Independent reference implementations used as test oracles.

Everything here is written with plain Python loops or math so it shares no
code path with the vectorised package implementation.
"""

from __future__ import annotations

import math

import numpy as np

from deepfeaturex.nn import Tensor


def naive_conv2d(x, w, b, pad, stride):
    c_in, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    xp = np.zeros((c_in, h + 2 * pad, wd + 2 * pad))
    xp[:, pad:pad + h, pad:pad + wd] = x
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((c_out, oh, ow))
    for o in range(c_out):
        for i in range(oh):
            for j in range(ow):
                acc = 0.0 if b is None else float(b[o])
                for c in range(c_in):
                    for u in range(kh):
                        for v in range(kw):
                            acc += xp[c, i * stride + u, j * stride + v] * w[o, c, u, v]
                out[o, i, j] = acc
    return out


def naive_conv1d(x, w, b, pad, stride):
    c_in, length = x.shape
    c_out, _, k = w.shape
    xp = [[0.0] * pad + list(map(float, x[c])) + [0.0] * pad for c in range(c_in)]
    n_out = (length + 2 * pad - k) // stride + 1
    out = np.zeros((c_out, n_out))
    for o in range(c_out):
        for i in range(n_out):
            acc = 0.0 if b is None else float(b[o])
            for c in range(c_in):
                for u in range(k):
                    acc += xp[c][i * stride + u] * w[o, c, u]
            out[o, i] = acc
    return out


def naive_avg_pool2(x):
    c, h, w = x.shape
    out = np.zeros((c, h // 2, w // 2))
    for k in range(c):
        for i in range(h // 2):
            for j in range(w // 2):
                out[k, i, j] = (x[k, 2 * i, 2 * j] + x[k, 2 * i + 1, 2 * j] + x[k, 2 * i, 2 * j + 1] + x[k, 2 * i + 1, 2 * j + 1]) / 4
    return out


def naive_gap(x):
    out = []
    for ch in x:
        flat = list(np.asarray(ch, dtype=np.float64).ravel())
        out.append(math.fsum(flat) / len(flat))
    return np.array(out)


def naive_weighted_ce(logits, targets, weights):
    """Per-sample softmax with Python floats, then the weighted mean NLL."""
    total = 0.0
    for row, y in zip(logits, targets):
        m = max(row)
        exps = [math.exp(float(v) - m) for v in row]
        p = exps[y] / math.fsum(exps)
        total += -weights[y] * math.log(p)
    return total / len(targets)


def finite_difference(f, inputs, step=1e-4):
    """Central differences of scalar ``f(*inputs)`` with respect to every input array."""
    grads = []
    for x in inputs:
        g = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            old = x[idx]
            x[idx] = old + step
            hi = f(*inputs)
            x[idx] = old - step
            lo = f(*inputs)
            x[idx] = old
            g[idx] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-7):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def gradcheck(layer, arrays, rng, step=1e-4):
    """Compare analytic and numeric gradients of ``sum(R * layer(*tensors))`` for a fixed random R.

    Returns the worst relative error over all inputs.
    """
    tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    out = layer(*tensors)
    r = rng.normal(size=out.shape)
    (out * Tensor(r)).sum().backward()

    def scalar(*xs):
        return float(np.sum(layer(*[Tensor(x, dtype=np.float64) for x in xs]).data * r))

    numeric = finite_difference(scalar, [t.data.copy() for t in tensors], step)
    return max(max_relative_error(t.grad, g) for t, g in zip(tensors, numeric))


def brute_force_metrics(preds, labels, k):
    """Accuracy and macro (k > 2) or positive-class-1 (k == 2) recall / precision / F1."""
    n = len(labels)
    acc = sum(1 for p, y in zip(preds, labels) if p == y) / n

    def prf(c):
        tp = sum(1 for p, y in zip(preds, labels) if p == c and y == c)
        fp = sum(1 for p, y in zip(preds, labels) if p == c and y != c)
        fn = sum(1 for p, y in zip(preds, labels) if p != c and y == c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        return rec, prec, f1

    if k == 2:
        rec, prec, f1 = prf(1)
    else:
        rows = [prf(c) for c in range(k)]
        rec = sum(r[0] for r in rows) / k
        prec = sum(r[1] for r in rows) / k
        f1 = sum(r[2] for r in rows) / k
    return acc, rec, prec, f1
