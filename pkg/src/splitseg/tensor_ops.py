"""Dense float32 tensor primitives for the segmentation network.

A tensor is a (channels, height, width) float32 ndarray in channel-major,
row-major layout. Every operation here is a pure function: no argument is
mutated and repeated calls on identical inputs give bitwise-identical
outputs.
"""

from __future__ import annotations

import numpy as np


def as_tensor(data) -> np.ndarray:
    """Coerce array-like data to a (channels, height, width) float32 array."""
    x = np.asarray(data, dtype=np.float32)
    if x.ndim != 3:
        raise ValueError(f"tensor must have shape (channels, height, width), got {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1 or x.shape[2] < 1:
        raise ValueError(f"tensor dimensions must be positive, got {x.shape}")
    return x


def conv2d(x, kernels, bias, stride: int = 1, padding: int = 0) -> np.ndarray:
    """2-D convolution (cross-correlation) with zero padding.

    kernels has shape (out_ch, in_ch, k, k) with odd k; bias has one entry
    per output channel. Output spatial size follows
    floor((dim + 2*padding - k) / stride) + 1.
    """
    x = as_tensor(x)
    w = np.asarray(kernels, dtype=np.float32)
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ValueError(f"kernels must have shape (out_ch, in_ch, k, k), got {w.shape}")
    out_ch, in_ch, k, _ = w.shape
    if k % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {k}")
    if in_ch != x.shape[0]:
        raise ValueError(f"channel mismatch: input has {x.shape[0]} channels, kernels expect {in_ch}")
    b = np.asarray(bias, dtype=np.float32).reshape(-1)
    if b.size != out_ch:
        raise ValueError(f"bias length {b.size} != out_ch {out_ch}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")

    _, h, wd = x.shape
    out_h = (h + 2 * padding - k) // stride + 1
    out_w = (wd + 2 * padding - k) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ValueError(
            f"empty output: input {h}x{wd}, kernel {k}, stride {stride}, padding {padding}"
        )

    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding))) if padding else x
    acc = np.zeros((out_ch, out_h, out_w), dtype=np.float32)
    for dy in range(k):
        y_stop = dy + (out_h - 1) * stride + 1
        for dx in range(k):
            x_stop = dx + (out_w - 1) * stride + 1
            patch = xp[:, dy:y_stop:stride, dx:x_stop:stride]
            acc += np.tensordot(w[:, :, dy, dx], patch, axes=([1], [0]))
    acc += b[:, None, None]
    return np.ascontiguousarray(acc, dtype=np.float32)


def affine_norm(x, scale, shift) -> np.ndarray:
    """Per-channel affine map out[c] = scale[c] * x[c] + shift[c]."""
    x = as_tensor(x)
    s = np.asarray(scale, dtype=np.float32).reshape(-1)
    t = np.asarray(shift, dtype=np.float32).reshape(-1)
    if s.size != x.shape[0] or t.size != x.shape[0]:
        raise ValueError(
            f"scale/shift length ({s.size}/{t.size}) must equal channel count {x.shape[0]}"
        )
    return x * s[:, None, None] + t[:, None, None]


def relu(x) -> np.ndarray:
    x = as_tensor(x)
    return np.maximum(x, np.float32(0.0))


def avg_pool_to(x, out_h: int, out_w: int) -> np.ndarray:
    """Adaptive average pooling to an arbitrary (out_h, out_w) grid.

    Bin (i, j) averages the half-open window
    [floor(i*H/out_h), floor((i+1)*H/out_h)) x [floor(j*W/out_w), floor((j+1)*W/out_w)).
    """
    x = as_tensor(x)
    c, h, w = x.shape
    if not (1 <= out_h <= h) or not (1 <= out_w <= w):
        raise ValueError(f"pool grid {out_h}x{out_w} exceeds spatial size {h}x{w}")
    ys = [(i * h) // out_h for i in range(out_h + 1)]
    xs = [(j * w) // out_w for j in range(out_w + 1)]
    out = np.empty((c, out_h, out_w), dtype=np.float32)
    for i in range(out_h):
        for j in range(out_w):
            out[:, i, j] = x[:, ys[i]:ys[i + 1], xs[j]:xs[j + 1]].mean(axis=(1, 2))
    return out


def adaptive_avg_pool(x, bins: int) -> np.ndarray:
    """Square adaptive average pooling to a bins x bins grid."""
    return avg_pool_to(x, bins, bins)


def bilinear_resize(x, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers and edge clamping.

    Source coordinate for destination index d is (d + 0.5) * in/out - 0.5,
    clamped to [0, in - 1].
    """
    x = as_tensor(x)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {out_h}x{out_w}")
    c, h, w = x.shape
    ys = np.clip((np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(np.float32)[None, :, None]
    wx = (xs - x0).astype(np.float32)[None, None, :]

    yy0, yy1 = y0[:, None], y1[:, None]
    xx0, xx1 = x0[None, :], x1[None, :]
    tl = x[:, yy0, xx0]
    tr = x[:, yy0, xx1]
    bl = x[:, yy1, xx0]
    br = x[:, yy1, xx1]
    # lerp form keeps constant inputs exactly constant
    top = tl + wx * (tr - tl)
    bot = bl + wx * (br - bl)
    out = top + wy * (bot - top)
    return np.ascontiguousarray(out, dtype=np.float32)


def add(a, b) -> np.ndarray:
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch in add: {a.shape} vs {b.shape}")
    return a + b


def concat_channels(parts) -> np.ndarray:
    """Stack tensors along the channel axis; spatial dims must agree."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ValueError("concat_channels needs at least one tensor")
    hw = parts[0].shape[1:]
    for p in parts[1:]:
        if p.shape[1:] != hw:
            raise ValueError(f"spatial mismatch in concat: {p.shape[1:]} vs {hw}")
    return np.concatenate(parts, axis=0)
