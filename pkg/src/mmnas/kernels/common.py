"""Shape arithmetic and padding shared by both kernel backends."""

from __future__ import annotations

import numpy as np


def out_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def pad_nchw(x: np.ndarray, padding: int, value: float = 0.0) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(
        x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=value
    )


def crop_nchw(xp: np.ndarray, padding: int, h: int, w: int) -> np.ndarray:
    if padding == 0:
        return xp
    return xp[:, :, padding : padding + h, padding : padding + w]


def pool_valid_counts(size: int, k: int, stride: int, padding: int) -> np.ndarray:
    """Per output position, how many window cells fall inside the unpadded input."""
    n_out = out_size(size, k, stride, padding)
    starts = np.arange(n_out) * stride - padding
    lo = np.maximum(starts, 0)
    hi = np.minimum(starts + k, size)
    return (hi - lo).astype(np.int64)
