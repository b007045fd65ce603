"""Differentiable elementwise functions and layer primitives.

Spatial operations use channels-last layout: ``[H, W, C]`` or batched
``[B, H, W, C]``. Kernels follow ``[kh, kw, Cin, Cout]`` for full
convolutions and ``[kh, kw, C]`` for depthwise ones.
"""

import numpy as np
from scipy import special

from .tensor import ShapeError, _unbroadcast, as_tensor, make_result, reshape

PADDING_MODES = ("zero", "circular")


# -- elementwise -----------------------------------------------------------

def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return make_result(out, (a,), lambda g: (g / a.data,), "log")


def softplus(a):
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    return make_result(out, (a,), lambda g: (g * special.expit(a.data),), "softplus")


def sigmoid(a):
    a = as_tensor(a)
    out = special.expit(a.data)
    return make_result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a):
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)
    return make_result(out, (a,), lambda g: (g * (a.data > 0.0),), "relu")


def lgamma(a):
    """Log-gamma function with digamma as its derivative."""
    a = as_tensor(a)
    out = special.gammaln(a.data)
    return make_result(out, (a,), lambda g: (g * special.digamma(a.data),), "lgamma")


def safe_div(num, den):
    """``num / den`` where ``den > 0`` and 0 elsewhere (the 0/0 convention)."""
    num, den = as_tensor(num), as_tensor(den)
    pos = den.data > 0.0
    safe = np.where(pos, den.data, 1.0)
    out = np.where(pos, num.data / safe, 0.0)

    def bw(g):
        gn = np.where(pos, g / safe, 0.0)
        gd = np.where(pos, -g * out / safe, 0.0)
        return _unbroadcast(gn, num.shape), _unbroadcast(gd, den.shape)

    return make_result(out, (num, den), bw, "safe_div")


# -- spatial helpers -------------------------------------------------------

def _batched(x):
    x = as_tensor(x)
    if x.ndim == 3:
        return reshape(x, (1,) + x.shape), True
    if x.ndim != 4:
        raise ShapeError(f"expected [H,W,C] or [B,H,W,C] input, got shape {x.shape}")
    return x, False


def _unbatch(y, squeeze):
    return reshape(y, y.shape[1:]) if squeeze else y


def _check_kernel(kh, kw):
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel extents must be odd, got {kh}x{kw}")


def pad2d(x, ph, pw, mode="zero"):
    """Pad the two spatial axes of a ``[B, H, W, C]`` tensor."""
    if mode not in PADDING_MODES:
        raise ValueError(f"unknown padding mode {mode!r}")
    x = as_tensor(x)
    if ph == 0 and pw == 0:
        return x
    B, H, W, C = x.shape
    if mode == "zero":
        out = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))

        def bw(g):
            return (g[:, ph:ph + H, pw:pw + W, :],)

        return make_result(out, (x,), bw, "pad_zero")

    rows = np.arange(-ph, H + ph) % H
    cols = np.arange(-pw, W + pw) % W
    out = x.data[:, rows][:, :, cols]

    def bw(g):
        gr = np.zeros((B, H, W + 2 * pw, C))
        np.add.at(gr, (slice(None), rows), g)
        full = np.zeros((B, H, W, C))
        np.add.at(full, (slice(None), slice(None), cols), gr)
        return (full,)

    return make_result(out, (x,), bw, "pad_circular")


def _conv_valid(xp, kernel):
    kh, kw, cin, cout = kernel.shape
    B, Hp, Wp, _ = xp.shape
    Ho, Wo = Hp - kh + 1, Wp - kw + 1
    windows = np.lib.stride_tricks.sliding_window_view(xp.data, (kh, kw), axis=(1, 2))
    out = np.tensordot(windows, kernel.data, axes=([3, 4, 5], [2, 0, 1]))

    def bw(g):
        gk = np.tensordot(windows, g, axes=([0, 1, 2], [0, 1, 2]))  # [cin, kh, kw, cout]
        gk = np.transpose(gk, (1, 2, 0, 3))
        gx = np.zeros_like(xp.data)
        for i in range(kh):
            for j in range(kw):
                gx[:, i:i + Ho, j:j + Wo, :] += g @ kernel.data[i, j].T
        return gx, gk

    return make_result(out, (xp, kernel), bw, "conv2d")


def conv2d(x, kernel, padding_mode="zero", bias=None):
    """Same-size 2-D convolution (cross-correlation) of a channels-last grid.

    ``out[y, x, o] = sum_{i, j, c} in_pad[y + i, x + j, c] * kernel[i, j, c, o]``
    """
    kernel = as_tensor(kernel)
    x, squeeze = _batched(x)
    kh, kw, cin, _ = kernel.shape
    _check_kernel(kh, kw)
    if cin != x.shape[-1]:
        raise ShapeError(f"kernel expects {cin} input channels, input has {x.shape[-1]}")
    xp = pad2d(x, kh // 2, kw // 2, padding_mode)
    y = _conv_valid(xp, kernel)
    if bias is not None:
        y = y + bias
    return _unbatch(y, squeeze)


def _depthwise_valid(xp, kernel):
    kh, kw = kernel.shape[:2]
    B, Hp, Wp, C = xp.shape
    Ho, Wo = Hp - kh + 1, Wp - kw + 1
    kfull = np.broadcast_to(kernel.data, (kh, kw, C))
    windows = np.lib.stride_tricks.sliding_window_view(xp.data, (kh, kw), axis=(1, 2))
    out = np.einsum("bhwcij,ijc->bhwc", windows, kfull, optimize=True)

    def bw(g):
        gk = np.einsum("bhwcij,bhwc->ijc", windows, g, optimize=True)
        if kernel.shape[2] != C:
            gk = gk.sum(axis=2, keepdims=True)
        # input gradient: full correlation of g with the flipped kernel
        gp = np.pad(g, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
        gwin = np.lib.stride_tricks.sliding_window_view(gp, (kh, kw), axis=(1, 2))
        gx = np.einsum("bhwcij,ijc->bhwc", gwin, kfull[::-1, ::-1], optimize=True)
        return gx, gk

    return make_result(out, (xp, kernel), bw, "depthwise_conv2d")


def depthwise_conv2d(x, kernel, padding_mode="zero"):
    """Per-channel spatial convolution; ``kernel`` is ``[kh, kw, C]``.

    A ``[kh, kw, 1]`` kernel is shared by every channel.
    """
    kernel = as_tensor(kernel)
    x, squeeze = _batched(x)
    kh, kw, kc = kernel.shape
    _check_kernel(kh, kw)
    if kc not in (1, x.shape[-1]):
        raise ShapeError(f"depthwise kernel has {kc} channels, input has {x.shape[-1]}")
    xp = pad2d(x, kh // 2, kw // 2, padding_mode)
    return _unbatch(_depthwise_valid(xp, kernel), squeeze)


def pointwise(x, weights, bias=None):
    """1x1 convolution: channel mixing with ``weights`` of shape ``[Cin, Cout]``."""
    x, w = as_tensor(x), as_tensor(weights)
    if w.ndim == 4:
        w = reshape(w, w.shape[2:])
    if w.shape[0] != x.shape[-1]:
        raise ShapeError(f"pointwise weights expect {w.shape[0]} channels, input has {x.shape[-1]}")
    y = x @ w
    return y + bias if bias is not None else y


def depthwise_separable_conv(x, depth_kernel, point_kernel, padding_mode="zero", bias=None):
    """Depthwise spatial convolution followed by a 1x1 channel-mixing convolution."""
    return pointwise(depthwise_conv2d(x, depth_kernel, padding_mode), point_kernel, bias)


def dense(x, weights, bias):
    """Row-wise affine map ``x @ weights + bias``."""
    x, w, b = as_tensor(x), as_tensor(weights), as_tensor(bias)
    if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(
            f"dense shapes disagree: input {x.shape}, weights {w.shape}, bias {b.shape}")
    return x @ w + b
