"""Forward/backward kernels for the 3D CNN.

Feature maps are laid out ``(N, C, X, Y, Z)``; dense activations ``(N, U)``.
Every ``*_forward`` returns ``(output, cache)`` and the matching
``*_backward`` consumes ``(grad_output, cache)``.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "same_padding",
    "conv_output_dims",
    "pool_output_dims",
    "conv3d_forward",
    "conv3d_backward",
    "maxpool3d_forward",
    "maxpool3d_backward",
    "dense_forward",
    "dense_backward",
    "layer_norm_relu_forward",
    "layer_norm_relu_backward",
    "dropout_forward",
    "dropout_backward",
    "multicrop_geometry",
    "multicrop_forward",
    "multicrop_backward",
    "softmax",
    "softmax_cross_entropy",
]


def same_padding(n: int, k: int, s: int) -> tuple[int, int, int]:
    """Output size and (before, after) padding of a 'same' window op, TF style."""
    out = math.ceil(n / s)
    total = max((out - 1) * s + k - n, 0)
    return out, total // 2, total - total // 2


def conv_output_dims(dims, kernel: int, stride: int, padding: str):
    if padding == "same":
        return tuple(same_padding(n, kernel, stride)[0] for n in dims)
    if padding == "valid":
        return tuple((n - kernel) // stride + 1 for n in dims)
    raise ValueError(f"unknown padding {padding!r}")


def pool_output_dims(dims, window: int, stride: int):
    return tuple(same_padding(n, window, stride)[0] for n in dims)


def _pads(dims, k, s, padding):
    if padding == "valid":
        return [(0, 0)] * 3
    return [same_padding(n, k, s)[1:] for n in dims]


# ---------------------------------------------------------------- convolution


def conv3d_forward(x, W, stride=1, padding="same"):
    """Cross-correlation of ``x`` (N, C, X, Y, Z) with ``W`` (O, C, k, k, k); no bias."""
    n, c = x.shape[:2]
    o, _, k = W.shape[:3]
    dims = x.shape[2:]
    out = conv_output_dims(dims, k, stride, padding)
    if min(out) < 1:
        raise ValueError(f"convolution of {dims} with kernel {k} leaves no output")
    pads = _pads(dims, k, stride, padding)
    xp = np.pad(x, [(0, 0), (0, 0), *pads]) if any(sum(p) for p in pads) else x
    win = sliding_window_view(xp, (k, k, k), axis=(2, 3, 4))
    win = win[:, :, : (out[0] - 1) * stride + 1 : stride, : (out[1] - 1) * stride + 1 : stride,
              : (out[2] - 1) * stride + 1 : stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 4, 1, 5, 6, 7)).reshape(-1, c * k**3)
    wmat = W.reshape(o, -1).T
    y = (cols @ wmat).reshape(n, *out, o).transpose(0, 4, 1, 2, 3)
    return np.ascontiguousarray(y), (cols, x.shape, xp.shape, pads, W, stride, out)


def conv3d_backward(dy, cache):
    cols, x_shape, xp_shape, pads, W, stride, out = cache
    n, c = x_shape[:2]
    o, _, k = W.shape[:3]
    dy2 = dy.transpose(0, 2, 3, 4, 1).reshape(-1, o)
    dW = (cols.T @ dy2).T.reshape(W.shape)
    dcols = (dy2 @ W.reshape(o, -1)).reshape(n, *out, c, k, k, k)
    dxp = np.zeros(xp_shape, dtype=dy.dtype)
    s = stride
    for a in range(k):
        for b in range(k):
            for d in range(k):
                dxp[:, :, a : a + s * out[0] : s, b : b + s * out[1] : s, d : d + s * out[2] : s] += (
                    dcols[:, :, :, :, :, a, b, d].transpose(0, 4, 1, 2, 3)
                )
    (x0, _), (y0, _), (z0, _) = pads
    dx = dxp[:, :, x0 : x0 + x_shape[2], y0 : y0 + x_shape[3], z0 : z0 + x_shape[4]]
    return np.ascontiguousarray(dx), dW


# ---------------------------------------------------------------- max pooling


def maxpool3d_forward(x, window=2, stride=2):
    """'Same'-padded max pooling; padding never wins a window."""
    n, c = x.shape[:2]
    dims = x.shape[2:]
    out = pool_output_dims(dims, window, stride)
    pads = [same_padding(d, window, stride)[1:] for d in dims]
    xp = np.pad(x, [(0, 0), (0, 0), *pads], constant_values=-np.inf)
    win = sliding_window_view(xp, (window,) * 3, axis=(2, 3, 4))
    win = win[:, :, ::stride, ::stride, ::stride][:, :, : out[0], : out[1], : out[2]]
    flat = win.reshape(n, c, *out, window**3)
    arg = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return y, (arg, x.shape, xp.shape, pads, window, stride, out)


def maxpool3d_backward(dy, cache):
    arg, x_shape, xp_shape, pads, window, stride, out = cache
    n, c = x_shape[:2]
    da, rem = np.divmod(arg, window * window)
    db, dc = np.divmod(rem, window)
    gx = np.arange(out[0]).reshape(1, 1, -1, 1, 1) * stride + da
    gy = np.arange(out[1]).reshape(1, 1, 1, -1, 1) * stride + db
    gz = np.arange(out[2]).reshape(1, 1, 1, 1, -1) * stride + dc
    nc = np.arange(n * c).reshape(n, c, 1, 1, 1)
    X, Y, Z = xp_shape[2:]
    flat = ((nc * X + gx) * Y + gy) * Z + gz
    dxp = np.bincount(flat.ravel(), weights=dy.ravel(), minlength=int(np.prod(xp_shape)))
    dxp = dxp.reshape(xp_shape).astype(dy.dtype, copy=False)
    (x0, _), (y0, _), (z0, _) = pads
    return np.ascontiguousarray(dxp[:, :, x0 : x0 + x_shape[2], y0 : y0 + x_shape[3], z0 : z0 + x_shape[4]])


# ---------------------------------------------------------------- dense


def dense_forward(x, W, b=None):
    x2 = x.reshape(x.shape[0], -1)
    y = x2 @ W
    if b is not None:
        y = y + b
    return y, (x2, x.shape, W, b is not None)


def dense_backward(dy, cache):
    x2, x_shape, W, has_bias = cache
    dW = x2.T @ dy
    dx = (dy @ W.T).reshape(x_shape)
    db = dy.sum(axis=0) if has_bias else None
    return dx, dW, db


# ---------------------------------------------------------------- layer norm + ReLU


def layer_norm_relu_forward(x, gamma, beta, eps=1e-5):
    """ReLU((x - mu) / sigma * gamma + beta) with mu, sigma taken per sample
    over every channel and position; gamma/beta are per channel (or unit)."""
    axes = tuple(range(1, x.ndim))
    shape = (1, -1) + (1,) * (x.ndim - 2)
    mu = x.mean(axis=axes, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    z = xhat * gamma.reshape(shape) + beta.reshape(shape)
    active = z > 0
    return z * active, (xhat, inv, active, gamma, shape, axes)


def layer_norm_relu_backward(dy, cache):
    xhat, inv, active, gamma, shape, axes = cache
    dz = dy * active
    red = (0,) + axes[1:]
    dgamma = (dz * xhat).sum(axis=red)
    dbeta = dz.sum(axis=red)
    dxhat = dz * gamma.reshape(shape)
    dx = inv * (
        dxhat
        - dxhat.mean(axis=axes, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True)
    )
    return dx, dgamma, dbeta


# ---------------------------------------------------------------- dropout


def dropout_forward(x, keep_prob, rng=None, train=False):
    """Inverted dropout: scale kept units by 1/keep_prob while training."""
    if not train or keep_prob >= 1.0:
        return x, None
    keep = (rng.random(x.shape) < keep_prob).astype(x.dtype) / x.dtype.type(keep_prob)
    return x * keep, keep


def dropout_backward(dy, cache):
    return dy if cache is None else dy * cache


# ---------------------------------------------------------------- multi-crop pooling


def multicrop_geometry(dims, crop_fractions, pool_counts, window=2, stride=2):
    """Crop boxes per branch and the common output dims.

    Branch b takes the centred crop of ceil(fraction * dim) voxels per axis and
    max-pools it ``pool_counts[b]`` times; every branch must land on the same
    spatial shape. Every crop must hold at least one whole voxel, so the
    map side must be at least 1 / min(fraction) (4 for the default quarter crop).
    """
    if min(dims) * min(crop_fractions) < 1:
        raise ValueError(f"multi-crop needs sides of at least {math.ceil(1 / min(crop_fractions))}, got {tuple(dims)}")
    boxes, shapes = [], []
    for frac, pools in zip(crop_fractions, pool_counts):
        box = []
        shape = []
        for n in dims:
            size = min(n, math.ceil(frac * n - 1e-9))
            start = (n - size) // 2
            box.append((start, start + size))
            for _ in range(pools):
                size = same_padding(size, window, stride)[0]
            shape.append(size)
        boxes.append(tuple(box))
        shapes.append(tuple(shape))
    if len(set(shapes)) != 1:
        raise ValueError(
            f"multi-crop branches of a {tuple(dims)} map reach different shapes {shapes}"
        )
    return boxes, shapes[0]


def multicrop_forward(x, crop_fractions=(1.0, 0.5, 0.25), pool_counts=(2, 1, 0)):
    boxes, _ = multicrop_geometry(x.shape[2:], crop_fractions, pool_counts)
    outs, caches = [], []
    for box, pools in zip(boxes, pool_counts):
        h = x[:, :, box[0][0] : box[0][1], box[1][0] : box[1][1], box[2][0] : box[2][1]]
        pc = []
        for _ in range(pools):
            h, cache = maxpool3d_forward(h, 2, 2)
            pc.append(cache)
        outs.append(h)
        caches.append(pc)
    return np.concatenate(outs, axis=1), (boxes, caches, x.shape, [o.shape[1] for o in outs])


def multicrop_backward(dy, cache):
    boxes, caches, x_shape, widths = cache
    dx = np.zeros(x_shape, dtype=dy.dtype)
    start = 0
    for box, pc, width in zip(boxes, caches, widths):
        g = dy[:, start : start + width]
        start += width
        for c in reversed(pc):
            g = maxpool3d_backward(g, c)
        dx[:, :, box[0][0] : box[0][1], box[1][0] : box[1][1], box[2][0] : box[2][1]] += g
    return dx


# ---------------------------------------------------------------- output


def softmax(logits):
    """Row-wise softmax, max-shifted so large logits do not overflow."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of two-class logits and d(loss)/d(logits).

    Uses log-sum-exp so the loss stays finite for saturated logits.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    logp = z - lse[:, None]
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), (grad / n).astype(logits.dtype, copy=False)
