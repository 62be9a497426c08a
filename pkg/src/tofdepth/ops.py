"""Dense-tensor kernels for the patch regression network.

Tensors are plain numpy arrays in (batch, height, width, channels) layout,
row-major and channel-minor. Every op here is a pure function of its inputs
and is safe to call concurrently on distinct data.

Batch handling: the batch axis is kept as a matmul broadcast dimension, so
each sample goes through a GEMM of identical shape regardless of batch size.
Predictions are therefore bit-identical whether a sample is processed alone
or inside any batch (batch normalization is the deliberate exception).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError


def conv2d_out_size(size: int, kernel: int, pad: int, stride: int) -> int:
    """Output extent of a convolution along one axis."""
    return (size + 2 * pad - kernel) // stride + 1


def _check_conv_args(x, kernel, stride, pad):
    if x.ndim != 4:
        raise ConfigError(f"conv input must be (N,H,W,C), got shape {x.shape}")
    if kernel.ndim != 4:
        raise ConfigError(f"conv kernel must be (O,I,kh,kw), got shape {kernel.shape}")
    if x.shape[3] != kernel.shape[1]:
        raise ConfigError(
            f"channel mismatch: input shape {x.shape} has {x.shape[3]} channels, "
            f"kernel shape {kernel.shape} expects {kernel.shape[1]}"
        )
    if stride not in (1, 2):
        raise ConfigError(f"stride must be 1 or 2, got {stride}")
    if pad < 0:
        raise ConfigError(f"padding must be non-negative, got {pad}")
    _, h, w, _ = x.shape
    _, _, kh, kw = kernel.shape
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise ConfigError(
            f"spatial size {h}x{w} with pad {pad} smaller than kernel {kh}x{kw}"
        )


def _im2col(x, kh, kw, stride, pad):
    """Unfold x into (N, OH*OW, kh*kw*C) column blocks."""
    n, h, w, c = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    oh = conv2d_out_size(h, kh, pad, stride)
    ow = conv2d_out_size(w, kw, pad, stride)
    # windows: (N, OH, OW, C, kh, kw) -> flatten as (dy, dx, c) to match kernels
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n, oh * ow, kh * kw * c)
    return np.ascontiguousarray(cols), oh, ow


def _kernel_matrix(kernel):
    o, i, kh, kw = kernel.shape
    return kernel.transpose(2, 3, 1, 0).reshape(kh * kw * i, o)


def conv2d_forward_cache(x, kernel, bias, stride=1, pad=0):
    """Convolution forward returning (output, cache) for a later backward."""
    _check_conv_args(x, kernel, stride, pad)
    n = x.shape[0]
    o, i, kh, kw = kernel.shape
    cols, oh, ow = _im2col(x, kh, kw, stride, pad)
    kmat = _kernel_matrix(kernel)
    y3 = cols @ kmat  # per-sample GEMMs via the broadcast batch axis
    if bias is not None:
        y3 = y3 + bias
    y = y3.reshape(n, oh, ow, o)
    cache = (cols, x.shape, kernel.shape, stride, pad)
    return y, cache


def conv2d_forward(x, kernel, bias=None, stride=1, pad=0):
    """2-D convolution: x (N,H,W,C) with kernel (O,I,kh,kw) -> (N,OH,OW,O)."""
    y, _ = conv2d_forward_cache(x, kernel, bias, stride, pad)
    return y


def conv2d_backward_cache(cache, kernel, dy):
    cols, x_shape, kernel_shape, stride, pad = cache
    n, h, w, c = x_shape
    o, i, kh, kw = kernel_shape
    if dy.ndim != 4 or dy.shape[0] != n or dy.shape[3] != o:
        raise ConfigError(
            f"upstream grad shape {dy.shape} does not match forward output "
            f"(batch {n}, out channels {o})"
        )
    oh = conv2d_out_size(h, kh, pad, stride)
    ow = conv2d_out_size(w, kw, pad, stride)
    if dy.shape[1] != oh or dy.shape[2] != ow:
        raise ConfigError(
            f"upstream grad spatial {dy.shape[1]}x{dy.shape[2]} != {oh}x{ow}"
        )

    dy3 = dy.reshape(n, oh * ow, o)
    dkmat = np.matmul(cols.transpose(0, 2, 1), dy3).sum(axis=0)
    dkernel = dkmat.reshape(kh, kw, i, o).transpose(3, 2, 0, 1)
    dbias = dy.sum(axis=(0, 1, 2))

    kmat = _kernel_matrix(kernel)
    dcols = (dy3 @ kmat.T).reshape(n, oh, ow, kh, kw, c)
    hp, wp = h + 2 * pad, w + 2 * pad
    dxp = np.zeros((n, hp, wp, c), dtype=dy.dtype)
    for r in range(kh):
        for s in range(kw):
            dxp[:, r : r + stride * oh : stride, s : s + stride * ow : stride, :] += (
                dcols[:, :, :, r, s, :]
            )
    dx = dxp[:, pad : hp - pad, pad : wp - pad] if pad else dxp
    return np.ascontiguousarray(dx), dkernel, dbias


def conv2d_backward(x, kernel, dy, stride=1, pad=0):
    """Gradients of conv2d_forward w.r.t. input, kernel, and bias."""
    _check_conv_args(x, kernel, stride, pad)
    cols, _, _ = _im2col(x, kernel.shape[2], kernel.shape[3], stride, pad)
    cache = (cols, x.shape, kernel.shape, stride, pad)
    return conv2d_backward_cache(cache, kernel, dy)


def proj1x1_out_size(size: int, stride: int, offset: int) -> int:
    return (size - offset - 1) // stride + 1


def proj1x1_forward_cache(x, kernel, bias, stride=1, offset=0):
    """1x1 projection sampling taps at offset::stride along both spatial axes.

    offset=1, stride=2 places the taps at the window centers of a parallel
    3x3/pad-0/stride-2 branch, so both paths emit the same spatial size.
    """
    if kernel.ndim != 4 or kernel.shape[2] != 1 or kernel.shape[3] != 1:
        raise ConfigError(f"projection kernel must be (O,I,1,1), got {kernel.shape}")
    if x.shape[3] != kernel.shape[1]:
        raise ConfigError(
            f"channel mismatch: input {x.shape} vs projection kernel {kernel.shape}"
        )
    n, h, w, c = x.shape
    o = kernel.shape[0]
    oh = proj1x1_out_size(h, stride, offset)
    ow = proj1x1_out_size(w, stride, offset)
    view = x[:, offset :: stride, offset :: stride, :][:, :oh, :ow, :]
    v3 = np.ascontiguousarray(view.reshape(n, oh * ow, c))
    wmat = kernel.reshape(o, c).T
    y3 = v3 @ wmat
    if bias is not None:
        y3 = y3 + bias
    cache = (v3, x.shape, kernel.shape, stride, offset, oh, ow)
    return y3.reshape(n, oh, ow, o), cache


def proj1x1_backward_cache(cache, kernel, dy):
    v3, x_shape, kernel_shape, stride, offset, oh, ow = cache
    n, h, w, c = x_shape
    o = kernel_shape[0]
    if dy.shape != (n, oh, ow, o):
        raise ConfigError(f"upstream grad shape {dy.shape} != {(n, oh, ow, o)}")
    dy3 = dy.reshape(n, oh * ow, o)
    dwmat = np.matmul(v3.transpose(0, 2, 1), dy3).sum(axis=0)  # (C, O)
    dkernel = dwmat.T.reshape(kernel_shape)
    dbias = dy.sum(axis=(0, 1, 2))
    wmat = kernel.reshape(o, c).T
    dview = (dy3 @ wmat.T).reshape(n, oh, ow, c)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    dx[:, offset : offset + stride * oh : stride, offset : offset + stride * ow : stride, :] = dview
    return dx, dkernel, dbias


def relu(x):
    """Elementwise max(x, 0)."""
    return np.maximum(x, 0)


def relu_backward(x, dy):
    """Gate the upstream gradient by (x > 0)."""
    return dy * (x > 0)


def batchnorm_forward_cache(x, gamma, beta, eps=1e-5):
    """Per-channel normalization over the (batch, height, width) axes.

    Always uses the statistics of the batch it is given; there is no
    running-average mode. This is the behavior that couples predictions
    within an inference batch.
    """
    axes = (0, 1, 2)
    m = x.shape[0] * x.shape[1] * x.shape[2]
    mu = x.mean(axis=axes)
    var = x.var(axis=axes)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    y = gamma * xhat + beta
    return y, (xhat, inv_std, gamma, m)


def batchnorm_backward_cache(cache, dy):
    xhat, inv_std, gamma, m = cache
    axes = (0, 1, 2)
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * gamma
    dx = (inv_std / m) * (
        m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes)
    )
    return dx.astype(dy.dtype, copy=False), dgamma, dbeta


def smooth_l1(prediction, target, beta=1.0):
    """Huber-style loss: quadratic within |r| < beta, linear beyond.

    loss = 0.5 r^2 / beta      if |r| < beta
         = |r| - 0.5 beta      otherwise
    """
    if beta <= 0:
        raise ConfigError(f"smooth_l1 beta must be positive, got {beta}")
    r = np.asarray(prediction) - np.asarray(target)
    a = np.abs(r)
    return np.where(a < beta, 0.5 * r * r / beta, a - 0.5 * beta)


def smooth_l1_grad(prediction, target, beta=1.0):
    """d loss / d prediction for smooth_l1."""
    if beta <= 0:
        raise ConfigError(f"smooth_l1 beta must be positive, got {beta}")
    r = np.asarray(prediction) - np.asarray(target)
    return np.where(np.abs(r) < beta, r / beta, np.sign(r))


def require_finite(name: str, arr, exc=None):
    """Raise if arr contains NaN/Inf; non-finite values must never propagate."""
    if not np.isfinite(arr).all():
        exc_type = exc or ValueError
        raise exc_type(f"non-finite values in {name}")
    return arr
