"""Forward/backward layer functions on numpy arrays.

Every forward returns ``(out, cache)`` and the matching backward consumes
``(dout, cache)``.  Activations are (N, C, T, H, W); nothing here allocates
global state, so layers compose freely at float32 or float64.

Convolution is im2col plus one matmul; its backward scatters columns back
with one strided add per kernel offset.  Batch normalization computes
statistics over sub-groups of the batch so the effective statistics batch
size can be held fixed while the mini-batch size varies.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import ShapeError


def _conv_out(size: int, k: int, stride: int, pad: tuple[int, int]) -> int:
    return (size + pad[0] + pad[1] - k) // stride + 1


def conv3d_forward(
    x: np.ndarray,
    w: np.ndarray,
    stride: tuple[int, int, int],
    padding: tuple[tuple[int, int], ...],
):
    """3-D convolution (cross-correlation), no bias.

    Args:
        x: input (N, C, T, H, W).
        w: filters (F, C, KT, KH, KW).
        stride: (temporal, vertical, horizontal) step.
        padding: per-axis (before, after) zero padding for T, H, W.

    Returns:
        (out, cache) with out of shape (N, F, OT, OH, OW).
    """
    if x.ndim != 5 or w.ndim != 5:
        raise ShapeError(f"conv3d expects 5-D input and filters, got {x.shape}, {w.shape}")
    n, c, t, h, wd = x.shape
    f, cw, kt, kh, kw = w.shape
    if c != cw:
        raise ShapeError(f"conv3d channel mismatch: input {c}, filters {cw}")
    (pt, ph, pw) = padding
    st, sh, sw = stride
    ot = _conv_out(t, kt, st, pt)
    oh = _conv_out(h, kh, sh, ph)
    ow = _conv_out(wd, kw, sw, pw)
    if min(ot, oh, ow) < 1:
        raise ShapeError(
            f"conv3d output empty for input {x.shape}, kernel {(kt, kh, kw)}, "
            f"stride {stride}, padding {padding}"
        )

    xp = np.pad(x, ((0, 0), (0, 0), pt, ph, pw))
    sn, sc, s2, s3, s4 = xp.strides
    view = as_strided(
        xp,
        shape=(n, c, kt, kh, kw, ot, oh, ow),
        strides=(sn, sc, s2, s3, s4, s2 * st, s3 * sh, s4 * sw),
    )
    cols = np.ascontiguousarray(view.transpose(0, 5, 6, 7, 1, 2, 3, 4))
    cols = cols.reshape(n * ot * oh * ow, c * kt * kh * kw)
    out = cols @ w.reshape(f, -1).T
    out = np.ascontiguousarray(
        out.reshape(n, ot, oh, ow, f).transpose(0, 4, 1, 2, 3))
    cache = (x.shape, xp.shape, cols, w, stride, padding, (ot, oh, ow))
    return out, cache


def conv3d_backward(dout: np.ndarray, cache):
    """Gradients of ``conv3d_forward``: returns (dx, dw)."""
    x_shape, xp_shape, cols, w, stride, padding, out_shape = cache
    n, c, t, h, wd = x_shape
    f, _, kt, kh, kw = w.shape
    st, sh, sw = stride
    (pt, ph, pw) = padding
    ot, oh, ow = out_shape

    dout2 = np.ascontiguousarray(dout.transpose(0, 2, 3, 4, 1)).reshape(-1, f)
    dw = (dout2.T @ cols).reshape(w.shape)
    dcols = dout2 @ w.reshape(f, -1)
    dview = dcols.reshape(n, ot, oh, ow, c, kt, kh, kw).transpose(0, 4, 5, 6, 7, 1, 2, 3)

    dxp = np.zeros(xp_shape, dtype=dout.dtype)
    for a in range(kt):
        for b in range(kh):
            for d in range(kw):
                dxp[:, :,
                    a:a + st * ot:st,
                    b:b + sh * oh:sh,
                    d:d + sw * ow:sw] += dview[:, :, a, b, d]
    dx = dxp[:, :, pt[0]:pt[0] + t, ph[0]:ph[0] + h, pw[0]:pw[0] + wd]
    return np.ascontiguousarray(dx), dw


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    *,
    group: int,
    momentum: float = 0.1,
    eps: float = 1e-5,
    training: bool = True,
):
    """Per-channel normalization with sub-group statistics.

    In training mode the batch is split into ``N // group`` groups of
    ``group`` samples; each group is normalized with its own mean and
    (biased) variance over the group and all non-channel axes.  Running
    statistics are updated in place with the average of the group
    statistics.  In inference mode running statistics are used and
    `group` is ignored.

    Args:
        x: input (N, C, ...); N must be a multiple of `group` in training.
        gamma, beta: per-channel scale and shift, shape (C,).
        running_mean, running_var: per-channel buffers, updated in place.
        group: statistics group size.

    Returns:
        (out, cache); cache is None in inference mode.
    """
    n, c = x.shape[:2]
    spatial = x.shape[2:]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"gamma/beta must have shape ({c},)")
    if not training:
        inv = 1.0 / np.sqrt(running_var + eps)
        shape = (1, c) + (1,) * len(spatial)
        out = (x - running_mean.reshape(shape)) * (gamma * inv).reshape(shape) \
            + beta.reshape(shape)
        return out.astype(x.dtype, copy=False), None

    if group < 1 or n % group:
        raise ShapeError(f"batch size {n} is not a multiple of group size {group}")
    ng = n // group
    xg = x.reshape(ng, group, c, -1)
    mean = xg.mean(axis=(1, 3))                      # (ng, C)
    var = xg.var(axis=(1, 3))                        # biased
    inv_std = 1.0 / np.sqrt(var + eps)
    xn = (xg - mean[:, None, :, None]) * inv_std[:, None, :, None]
    out = xn * gamma[None, None, :, None] + beta[None, None, :, None]

    running_mean *= 1.0 - momentum
    running_mean += momentum * mean.mean(axis=0)
    running_var *= 1.0 - momentum
    running_var += momentum * var.mean(axis=0)

    cache = (xn, inv_std, gamma, x.shape)
    return out.reshape(x.shape).astype(x.dtype, copy=False), cache


def batchnorm_backward(dout: np.ndarray, cache):
    """Gradients of training-mode ``batchnorm_forward``.

    Returns (dx, dgamma, dbeta); group statistics are treated as functions
    of the input, so the full normalization Jacobian is applied per group.
    """
    xn, inv_std, gamma, x_shape = cache
    ng, group, c, m = xn.shape
    dg = dout.reshape(ng, group, c, m)
    dgamma = np.einsum("gbcm,gbcm->c", dg, xn)
    dbeta = dg.sum(axis=(0, 1, 3))

    dxn = dg * gamma[None, None, :, None]
    count = group * m
    s1 = dxn.sum(axis=(1, 3), keepdims=True)
    s2 = (dxn * xn).sum(axis=(1, 3), keepdims=True)
    dx = (dxn - s1 / count - xn * s2 / count) * inv_std[:, None, :, None]
    return dx.reshape(x_shape), dgamma, dbeta


def relu_forward(x: np.ndarray):
    out = np.maximum(x, 0)
    return out, x > 0


def relu_backward(dout: np.ndarray, cache):
    return dout * cache


def global_avg_pool_forward(x: np.ndarray):
    """Mean over all axes after the channel: (N, C, ...) -> (N, C)."""
    n, c = x.shape[:2]
    flat = x.reshape(n, c, -1)
    return flat.mean(axis=2), x.shape


def global_avg_pool_backward(dout: np.ndarray, cache):
    x_shape = cache
    n, c = x_shape[:2]
    m = int(np.prod(x_shape[2:]))
    dx = np.broadcast_to((dout / m)[:, :, None], (n, c, m))
    return dx.reshape(x_shape).copy()


def fc_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Affine layer: (N, D) @ (D, K) + (K,)."""
    return x @ w + b, (x, w)


def fc_backward(dout: np.ndarray, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch.

    Args:
        logits: (N, K) unnormalized scores.
        labels: (N,) integer class indices.

    Returns:
        (loss, dlogits, probs) with dlogits already averaged over N.
    """
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels must have shape ({n},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ShapeError(f"labels out of range for {k} classes")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    idx = np.arange(n)
    loss = -np.mean(np.log(probs[idx, labels] + 1e-32))
    dlogits = probs.copy()
    dlogits[idx, labels] -= 1.0
    dlogits /= n
    return loss, dlogits, probs
