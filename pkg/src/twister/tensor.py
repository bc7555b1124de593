"""Dense float64 array primitives shared by every other module.

Arrays are plain ``numpy.ndarray`` objects in row-major (C) order. Feature
grids are laid out ``(height, width, channels)`` and token sequences
``(length, channels)``.
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand extents are incompatible."""


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a C-contiguous float64 array (no copy if already one)."""
    return np.asarray(x, dtype=DTYPE, order="C")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of ``a[..., m, k]`` and ``b[k, n]``.

    Leading dimensions of ``a`` are treated as a batch of rows, which is how
    pointwise (per-pixel / per-token) linear maps are applied.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if b.ndim != 2 or a.ndim < 1:
        raise ShapeError(f"matmul expects a[..., k] and b[k, n], got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"dimension mismatch: inner extents {a.shape[-1]} and {b.shape[0]}")
    lead = a.shape[:-1]
    out = a.reshape(-1, a.shape[-1]) @ b
    return out.reshape(*lead, b.shape[1])


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    out = matmul(x, weight)
    if bias is not None:
        out = out + bias
    return out


def conv2d(
    x: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None
) -> np.ndarray:
    """Same-padded 2-D convolution (cross-correlation) on an ``(h, w, c_in)`` grid.

    ``kernel`` has shape ``(k, k, c_in, c_out)`` with ``k`` odd; padding is
    zeros. Kernel taps are accumulated in a fixed row-major order so repeated
    calls are bitwise identical.
    """
    x = as_tensor(x)
    kernel = as_tensor(kernel)
    if x.ndim != 3 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects x[h, w, c] and kernel[k, k, ci, co], got {x.shape}, {kernel.shape}")
    k = kernel.shape[0]
    if kernel.shape[1] != k or k % 2 == 0:
        raise ShapeError(f"kernel must be square with odd size, got {kernel.shape[:2]}")
    if kernel.shape[2] != x.shape[2]:
        raise ShapeError(f"channel mismatch: input has {x.shape[2]}, kernel expects {kernel.shape[2]}")
    h, w, _ = x.shape
    r = k // 2
    if r == 0:
        out = matmul(x, kernel[0, 0])
    else:
        padded = np.pad(x, ((r, r), (r, r), (0, 0)))
        out = np.zeros((h, w, kernel.shape[3]), dtype=DTYPE)
        for dy in range(k):
            for dx in range(k):
                out += matmul(padded[dy : dy + h, dx : dx + w], kernel[dy, dx])
    if bias is not None:
        out = out + bias
    return out


def layer_norm(
    x: np.ndarray,
    eps: float = 1e-5,
    weight: np.ndarray | None = None,
    bias: np.ndarray | None = None,
) -> np.ndarray:
    """Normalize over the last axis to zero mean and unit variance."""
    x = as_tensor(x)
    if x.shape[-1] == 0:
        raise ShapeError("layer_norm over an empty last axis")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    out = centered / np.sqrt(var + eps)
    if weight is not None:
        out = out * weight
    if bias is not None:
        out = out + bias
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = as_tensor(x)
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + e^x) without overflow for large x
    x = as_tensor(x)
    return np.logaddexp(0.0, x)


def silu(x: np.ndarray) -> np.ndarray:
    x = as_tensor(x)
    return x / (1.0 + np.exp(-x))


def _upsample_axis(x: np.ndarray, axis: int) -> np.ndarray:
    # align_corners=False: out[2i] = .75 x[i] + .25 x[i-1], out[2i+1] = .75 x[i] + .25 x[i+1],
    # neighbours clamped at the border
    n = x.shape[axis]
    idx = np.arange(n)
    prev = np.take(x, np.maximum(idx - 1, 0), axis=axis)
    nxt = np.take(x, np.minimum(idx + 1, n - 1), axis=axis)
    even = 0.75 * x + 0.25 * prev
    odd = 0.75 * x + 0.25 * nxt
    out = np.stack([even, odd], axis=axis + 1)
    shape = list(x.shape)
    shape[axis] = 2 * n
    return out.reshape(shape)


def upsample2x(x: np.ndarray) -> np.ndarray:
    """Bilinear 2x upsampling of an ``(h, w, c)`` grid (align-corners false)."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"upsample2x expects x[h, w, c], got {x.shape}")
    return _upsample_axis(_upsample_axis(x, 0), 1)
