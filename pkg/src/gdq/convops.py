"""Numeric kernels for the controller and SR network: convolution, pooling,
normalization, pixel shuffle, bicubic upsampling.

All kernels accumulate in float64. ``conv2d_naive`` is the quadruple-loop
reference the fast path is checked against.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PAD_MODES = ("zero", "reflect")


def pad2d(x: np.ndarray, pad: int, mode: str = "zero") -> np.ndarray:
    """Pad the two trailing (spatial) axes of a (B, C, H, W) tensor."""
    if mode not in PAD_MODES:
        raise ValueError(f"pad mode must be one of {PAD_MODES}, got {mode!r}")
    if pad == 0:
        return x
    widths = ((0, 0), (0, 0), (pad, pad), (pad, pad))
    if mode == "reflect":
        return np.pad(x, widths, mode="reflect")
    return np.pad(x, widths, mode="constant")


def conv2d(
    x: np.ndarray,
    w: np.ndarray,
    bias: np.ndarray | None = None,
    stride: int = 1,
    pad: int = 0,
    pad_mode: str = "zero",
) -> np.ndarray:
    """Direct 2-D convolution (cross-correlation) of (B, Cin, H, W) by (Cout, Cin, kh, kw)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and weight, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, weight expects {w.shape[1]}")
    cout, cin, kh, kw = w.shape
    xp = pad2d(x, pad, pad_mode)
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise ValueError(f"kernel {kh}x{kw} larger than padded input {xp.shape[2]}x{xp.shape[3]}")
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    b, _, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, cin * kh * kw)
    out = cols @ w.reshape(cout, cin * kh * kw).T
    out = out.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64).reshape(1, cout, 1, 1)
    return out


def conv2d_naive(
    x: np.ndarray,
    w: np.ndarray,
    bias: np.ndarray | None = None,
    stride: int = 1,
    pad: int = 0,
    pad_mode: str = "zero",
) -> np.ndarray:
    """Quadruple-loop reference convolution; slow, for oracle checks only."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    cout, cin, kh, kw = w.shape
    xp = pad2d(x, pad, pad_mode)
    b = xp.shape[0]
    ho = (xp.shape[2] - kh) // stride + 1
    wo = (xp.shape[3] - kw) // stride + 1
    out = np.zeros((b, cout, ho, wo), dtype=np.float64)
    for bi in range(b):
        for co in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[bi, ci, i * stride + u, j * stride + v] * w[co, ci, u, v]
                    out[bi, co, i, j] = acc
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64).reshape(1, cout, 1, 1)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def avg_pool(x: np.ndarray, factor: int) -> np.ndarray:
    """Non-overlapping mean pooling of a (B, C, H, W) tensor by an integer factor."""
    if factor == 1:
        return x
    b, c, h, w = x.shape
    if h % factor or w % factor:
        raise ValueError(f"spatial dims ({h}, {w}) not divisible by pool factor {factor}")
    return x.reshape(b, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Mean over the spatial axes: (B, C, H, W) -> (B, C)."""
    return x.mean(axis=(2, 3))


def group_norm(
    x: np.ndarray,
    groups: int,
    scale: np.ndarray,
    shift: np.ndarray,
    eps: float = 1e-5,
) -> np.ndarray:
    """Group normalization with per-channel affine parameters."""
    b, c, h, w = x.shape
    if c % groups:
        raise ValueError(f"channels {c} not divisible by {groups} groups")
    g = np.asarray(x, dtype=np.float64).reshape(b, groups, c // groups, h, w)
    mean = g.mean(axis=(2, 3, 4), keepdims=True)
    var = g.var(axis=(2, 3, 4), keepdims=True)
    normed = ((g - mean) / np.sqrt(var + eps)).reshape(b, c, h, w)
    scale = np.asarray(scale, dtype=np.float64).reshape(1, c, 1, 1)
    shift = np.asarray(shift, dtype=np.float64).reshape(1, c, 1, 1)
    return normed * scale + shift


def depth_to_space(x: np.ndarray, scale: int) -> np.ndarray:
    """Pixel shuffle: (B, C*s^2, H, W) -> (B, C, H*s, W*s).

    Channel c*s^2 + dy*s + dx lands at output offset (dy, dx) within each
    s x s cell.
    """
    b, cs2, h, w = x.shape
    if cs2 % (scale * scale):
        raise ValueError(f"channels {cs2} not divisible by scale^2 = {scale * scale}")
    c = cs2 // (scale * scale)
    out = x.reshape(b, c, scale, scale, h, w).transpose(0, 1, 4, 2, 5, 3)
    return out.reshape(b, c, h * scale, w * scale)


def _cubic_kernel(t: np.ndarray) -> np.ndarray:
    # Keys bicubic kernel with a = -0.5 (Catmull-Rom)
    at = np.abs(t)
    inner = ((1.5 * at - 2.5) * at) * at + 1.0
    outer = (((-0.5 * at) + 2.5) * at - 4.0) * at + 2.0
    return np.where(at <= 1.0, inner, np.where(at < 2.0, outer, 0.0))


def _axis_weights(n: int, scale: int) -> tuple[np.ndarray, np.ndarray]:
    # 4 taps per output sample; source coords aligned on pixel centers,
    # borders replicated
    out_pos = (np.arange(n * scale, dtype=np.float64) + 0.5) / scale - 0.5
    base = np.floor(out_pos).astype(np.int64)
    frac = out_pos - base
    offsets = np.arange(-1, 3)
    idx = np.clip(base[:, None] + offsets[None, :], 0, n - 1)
    wts = _cubic_kernel(frac[:, None] - offsets[None, :])
    wts = wts / wts.sum(axis=1, keepdims=True)
    return idx, wts


def bicubic_upscale(x: np.ndarray, scale: int) -> np.ndarray:
    """Separable bicubic upsampling of a (B, C, H, W) tensor by an integer factor."""
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    x = np.asarray(x, dtype=np.float64)
    if scale == 1:
        return x.copy()
    idx_h, wts_h = _axis_weights(x.shape[2], scale)
    rows = (x[:, :, idx_h, :] * wts_h[None, None, :, :, None]).sum(axis=3)
    idx_w, wts_w = _axis_weights(x.shape[3], scale)
    return (rows[:, :, :, idx_w] * wts_w[None, None, None, :, :]).sum(axis=4)
