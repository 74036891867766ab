"""Forward/backward kernels for the layer core.

Each differentiable op comes as a pair: ``op(...)`` returns the output plus
whatever the backward pass needs, and ``op_backward(dout, ...)`` returns the
gradients. The kernels are stateless; :mod:`cocoanet.nn.layers` wraps them in
modules that own parameters and caches.
"""
from __future__ import annotations

import logging
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

logger = logging.getLogger(__name__)

# im2col chunks hold at most this many floats (~64 MB in float32).
_COLS_BUDGET = 16 * 1024 * 1024
_TARGET_COLUMNS = 4096


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _windows(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Strided view of shape (N, C, Ho, Wo, k, k) over a padded NCHW array."""
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride][:, :, :ho, :wo]


def _pad(x: np.ndarray, padding: int, value: float = 0.0) -> np.ndarray:
    if padding == 0:
        return x
    p = padding
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), constant_values=value)


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Columns of shape (C*k*k, n*Ho*Wo) for a padded chunk of n images."""
    n, c = xp.shape[:2]
    if k == 1:
        sub = xp[:, :, ::stride, ::stride][:, :, :ho, :wo]
        return sub.transpose(1, 0, 2, 3).reshape(c, n * ho * wo)
    win = _windows(xp, k, stride, ho, wo)
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, n * ho * wo)


def _chunk_size(n: int, c: int, k: int, ho: int, wo: int) -> int:
    per_image = c * k * k * ho * wo
    by_budget = max(1, _COLS_BUDGET // max(per_image, 1))
    by_width = max(1, _TARGET_COLUMNS // (ho * wo))
    return max(1, min(n, by_budget, by_width))


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None,
           stride: int = 1, padding: int = 0) -> np.ndarray:
    """2-D cross-correlation, NCHW input, weight (C_out, C_in, k, k)."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ValueError(
            f"conv2d: input shape {tuple(x.shape)} does not match weight shape "
            f"{tuple(weight.shape)} (expected input N x {weight.shape[1]} x H x W)")
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d: invalid stride={stride} / padding={padding}")
    n, c, h, w = x.shape
    c_out, _, k, k2 = weight.shape
    if k != k2:
        raise ValueError(f"conv2d: only square kernels are supported, got {k}x{k2}")
    ho = conv_output_size(h, k, stride, padding)
    wo = conv_output_size(w, k, stride, padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d: kernel {k} too large for input {h}x{w} with padding {padding}")

    w2 = weight.reshape(c_out, c * k * k)
    out = np.empty((n, c_out, ho, wo), dtype=x.dtype)
    step = _chunk_size(n, c, k, ho, wo)
    for i0 in range(0, n, step):
        i1 = min(n, i0 + step)
        cols = _im2col(_pad(x[i0:i1], padding), k, stride, ho, wo)
        if i1 - i0 == 1:
            np.matmul(w2, cols, out=out[i0].reshape(c_out, ho * wo))
        else:
            res = (w2 @ cols).reshape(c_out, i1 - i0, ho, wo)
            out[i0:i1] = res.transpose(1, 0, 2, 3)
    if bias is not None:
        out += bias.reshape(1, c_out, 1, 1)
    return out


def conv2d_backward(dout: np.ndarray, x: np.ndarray, weight: np.ndarray,
                    stride: int = 1, padding: int = 0, with_bias: bool = True):
    """Returns ``(dx, dweight, dbias)``; ``dbias`` is None without bias."""
    n, c, h, w = x.shape
    c_out, _, k, _ = weight.shape
    _, _, ho, wo = dout.shape
    w2 = weight.reshape(c_out, c * k * k)
    dw2 = np.zeros_like(w2)
    dx = np.zeros_like(x)
    p = padding
    step = _chunk_size(n, c, k, ho, wo)
    for i0 in range(0, n, step):
        i1 = min(n, i0 + step)
        m = i1 - i0
        cols = _im2col(_pad(x[i0:i1], p), k, stride, ho, wo)
        dy = dout[i0:i1].transpose(1, 0, 2, 3).reshape(c_out, m * ho * wo)
        dw2 += dy @ cols.T
        dcols = (w2.T @ dy).reshape(c, k, k, m, ho, wo)
        dxp = np.zeros((m, c, h + 2 * p, w + 2 * p), dtype=x.dtype)
        for a in range(k):
            for b in range(k):
                dxp[:, :, a:a + stride * ho:stride, b:b + stride * wo:stride] += \
                    dcols[:, a, b].transpose(1, 0, 2, 3)
        dx[i0:i1] = dxp[:, :, p:p + h, p:p + w]
    db = dout.sum(axis=(0, 2, 3)) if with_bias else None
    return dx, dw2.reshape(weight.shape), db


def maxpool2d(x: np.ndarray, window: int, stride: int, padding: int = 0):
    """Returns ``(out, argmax)``; ``argmax`` indexes the flattened window."""
    n, c, h, w = x.shape
    if window > h + 2 * padding or window > w + 2 * padding:
        raise ValueError(f"maxpool2d: window {window} larger than spatial dims {h}x{w}")
    ho = conv_output_size(h, window, stride, padding)
    wo = conv_output_size(w, window, stride, padding)
    xp = _pad(x, padding, -np.inf)
    win = _windows(xp, window, stride, ho, wo).reshape(n, c, ho, wo, window * window)
    arg = win.argmax(axis=-1).astype(np.uint8)
    out = np.take_along_axis(win, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg


def maxpool2d_backward(dout: np.ndarray, arg: np.ndarray, input_shape, window: int,
                       stride: int, padding: int = 0) -> np.ndarray:
    n, c, h, w = input_shape
    _, _, ho, wo = dout.shape
    p = padding
    dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=dout.dtype)
    for idx in range(window * window):
        a, b = divmod(idx, window)
        dxp[:, :, a:a + stride * ho:stride, b:b + stride * wo:stride] += np.where(arg == idx, dout, 0)
    return dxp[:, :, p:p + h, p:p + w]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dout: np.ndarray, out: np.ndarray) -> np.ndarray:
    return dout * (out > 0)


def gelu(x: np.ndarray) -> np.ndarray:
    return (0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))).astype(x.dtype, copy=False)


def gelu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return (dout * (cdf + x * pdf)).astype(x.dtype, copy=False)


def tanh_backward(dout: np.ndarray, out: np.ndarray) -> np.ndarray:
    return dout * (1.0 - out * out)


def batchnorm2d(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                running_mean: np.ndarray, running_var: np.ndarray,
                training: bool, momentum: float = 0.1, eps: float = 1e-5):
    """Per-channel batch normalization over (N, H, W).

    In training mode the running statistics are updated in place with
    ``running = (1 - momentum) * running + momentum * batch_stat`` (unbiased
    variance). Returns ``(out, cache)``.
    """
    shape = (1, -1, 1, 1)
    if training:
        if x.shape[0] < 2:
            raise ValueError("batchnorm2d: batch size 1 in train mode (variance undefined)")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        m = x.size // x.shape[1]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / (m - 1))
    else:
        mean, var = running_mean, running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype, copy=False)
    xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    out = xhat * gamma.reshape(shape) + beta.reshape(shape)
    return out, (xhat, inv_std, training)


def batchnorm2d_backward(dout: np.ndarray, gamma: np.ndarray, cache):
    xhat, inv_std, training = cache
    shape = (1, -1, 1, 1)
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    scale = (gamma * inv_std).reshape(shape)
    if not training:
        return dout * scale, dgamma, dbeta
    m = dout.size // dout.shape[1]
    dx = scale / m * (m * dout - dbeta.reshape(shape) - xhat * dgamma.reshape(shape))
    return dx, dgamma, dbeta


def dense(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None) -> np.ndarray:
    """Affine map ``x @ weight + bias`` over the last axis; weight is (D_in, D_out)."""
    if x.shape[-1] != weight.shape[0]:
        raise ValueError(
            f"dense: input shape {tuple(x.shape)} does not match weight shape "
            f"{tuple(weight.shape)}")
    out = x @ weight
    if bias is not None:
        out += bias
    return out


def dense_backward(dout: np.ndarray, x: np.ndarray, weight: np.ndarray, with_bias: bool = True):
    d_in, d_out = weight.shape
    x2 = x.reshape(-1, d_in)
    g2 = dout.reshape(-1, d_out)
    dw = x2.T @ g2
    db = g2.sum(axis=0) if with_bias else None
    return dout @ weight.T, dw, db


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(dout: np.ndarray, probs: np.ndarray) -> np.ndarray:
    return probs * (dout - (dout * probs).sum(axis=-1, keepdims=True))


def layernorm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-6):
    if x.shape[-1] != gamma.shape[-1]:
        raise ValueError(f"layernorm: last dim {x.shape[-1]} != parameter size {gamma.shape[-1]}")
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    return xhat * gamma + beta, (xhat, inv_std)


def layernorm_backward(dout: np.ndarray, gamma: np.ndarray, cache):
    xhat, inv_std = cache
    d = xhat.shape[-1]
    lead = tuple(range(dout.ndim - 1))
    dgamma = (dout * xhat).sum(axis=lead)
    dbeta = dout.sum(axis=lead)
    dxhat = dout * gamma
    dx = inv_std / d * (d * dxhat - dxhat.sum(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
    return dx, dgamma, dbeta


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """Split images into flattened non-overlapping patches.

    Accepts C x H x W or N x C x H x W. Patches are ordered row-major over the
    patch grid; inside a patch the vector is laid out as (row, col, channel)
    with channel fastest, i.e. index ``(py * P + px) * C + c``.
    """
    single = images.ndim == 3
    x = images[None] if single else images
    n, c, h, w = x.shape
    if h % patch or w % patch:
        raise ValueError(f"patchify: image {h}x{w} not divisible by patch size {patch}")
    gh, gw = h // patch, w // patch
    out = (x.reshape(n, c, gh, patch, gw, patch)
            .transpose(0, 2, 4, 3, 5, 1)
            .reshape(n, gh * gw, patch * patch * c))
    return out[0] if single else out


def unpatchify(patches: np.ndarray, patch: int, channels: int, height: int, width: int) -> np.ndarray:
    """Inverse of :func:`patchify`."""
    single = patches.ndim == 2
    p = patches[None] if single else patches
    n = p.shape[0]
    gh, gw = height // patch, width // patch
    out = (p.reshape(n, gh, gw, patch, patch, channels)
            .transpose(0, 5, 1, 3, 2, 4)
            .reshape(n, channels, height, width))
    return out[0] if single else out


def dropout(x: np.ndarray, rate: float, training: bool, rng: np.random.Generator):
    """Inverted dropout. Returns ``(out, mask)``; mask is None when inactive."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - rate))
    return x * mask, mask


def cross_entropy(probs: np.ndarray, onehot: np.ndarray, eps: float = 1e-12) -> float:
    """Mean over the batch of ``-log p[true class]``."""
    p_true = (probs * onehot).sum(axis=-1)
    if np.any(p_true < eps):
        logger.warning("cross_entropy: %d zero-probability targets clamped to %g",
                       int((p_true < eps).sum()), eps)
    return float(-np.log(np.maximum(p_true, eps)).mean())


def cross_entropy_backward(probs: np.ndarray, onehot: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    p_true = np.maximum((probs * onehot).sum(axis=-1, keepdims=True), eps)
    return -onehot / p_true / probs.shape[0]


def softmax_cross_entropy(logits: np.ndarray, onehot: np.ndarray):
    """Fused softmax + mean cross-entropy. Returns ``(loss, probs, dlogits)``."""
    z = logits - logits.max(axis=-1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    probs = np.exp(log_probs)
    loss = float(-(log_probs * onehot).sum(axis=-1).mean())
    dlogits = (probs - onehot) / logits.shape[0]
    return loss, probs, dlogits.astype(logits.dtype, copy=False)
