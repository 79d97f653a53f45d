"""Pure-numpy kernel implementations (fallback path, no JIT).

Convolutions go through sliding-window views plus tensordot/einsum;
scatter steps use slice-strided adds or np.add.at, both deterministic.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .common import crop_nchw, pad_nchw, pool_valid_counts


def _windows(xp: np.ndarray, k: int, stride: int) -> np.ndarray:
    sw = sliding_window_view(xp, (k, k), axis=(2, 3))
    return sw[:, :, ::stride, ::stride]


def conv2d_forward(x, w, stride=1, padding=0):
    kh = w.shape[2]
    xp = pad_nchw(x, padding)
    sw = _windows(xp, kh, stride)  # (N, C, Ho, Wo, kh, kw)
    out = np.tensordot(sw, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, O)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_backward(x, w, gout, stride=1, padding=0, need_gx=True):
    n, c, h, wd = x.shape
    kh = w.shape[2]
    ho, wo = gout.shape[2], gout.shape[3]
    xp = pad_nchw(x, padding)
    sw = _windows(xp, kh, stride)
    gw = np.tensordot(gout, sw, axes=([0, 2, 3], [0, 2, 3]))  # (O, C, kh, kw)
    gw = gw.astype(x.dtype, copy=False)
    if not need_gx:
        return None, gw
    gxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kh):
            contrib = np.einsum("nohw,oc->nchw", gout, w[:, :, i, j])
            gxp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += contrib
    return crop_nchw(gxp, padding, h, wd).copy(), gw


def depthwise_forward(x, w, stride=1, padding=0):
    # w has one k x k filter per input channel: (C, kh, kw)
    kh = w.shape[1]
    xp = pad_nchw(x, padding)
    sw = _windows(xp, kh, stride)
    return np.einsum("nchwij,cij->nchw", sw, w)


def depthwise_backward(x, w, gout, stride=1, padding=0, need_gx=True):
    n, c, h, wd = x.shape
    kh = w.shape[1]
    ho, wo = gout.shape[2], gout.shape[3]
    xp = pad_nchw(x, padding)
    sw = _windows(xp, kh, stride)
    gw = np.einsum("nchw,nchwij->cij", gout, sw)
    if not need_gx:
        return None, gw
    gxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kh):
            contrib = gout * w[:, i, j][None, :, None, None]
            gxp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += contrib
    return crop_nchw(gxp, padding, h, wd).copy(), gw


def maxpool_forward(x, k, stride=1, padding=0):
    xp = pad_nchw(x, padding, value=-np.inf)
    sw = _windows(xp, k, stride)
    flat = sw.reshape(sw.shape[:4] + (k * k,))
    argmax = flat.argmax(axis=-1)  # first max in (i, j) scan order
    out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), argmax


def maxpool_backward(hw, argmax, gout, k, stride=1, padding=0):
    h, w = hw
    n, c, ho, wo = gout.shape
    gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=gout.dtype)
    rows = np.arange(ho)[None, None, :, None] * stride + argmax // k
    cols = np.arange(wo)[None, None, None, :] * stride + argmax % k
    nn = np.arange(n)[:, None, None, None]
    cc = np.arange(c)[None, :, None, None]
    np.add.at(gxp, (nn, cc, rows, cols), gout)
    return crop_nchw(gxp, padding, h, w).copy()


def avgpool_forward(x, k, stride=1, padding=0):
    # padding cells do not count toward the mean
    h, w = x.shape[2], x.shape[3]
    xp = pad_nchw(x, padding)
    sw = _windows(xp, k, stride)
    sums = sw.sum(axis=(-2, -1))
    counts = np.multiply.outer(
        pool_valid_counts(h, k, stride, padding), pool_valid_counts(w, k, stride, padding)
    ).astype(x.dtype)
    return sums / counts


def avgpool_backward(hw, gout, k, stride=1, padding=0):
    h, w = hw
    n, c, ho, wo = gout.shape
    counts = np.multiply.outer(
        pool_valid_counts(h, k, stride, padding), pool_valid_counts(w, k, stride, padding)
    ).astype(gout.dtype)
    spread = gout / counts
    gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=gout.dtype)
    for i in range(k):
        for j in range(k):
            gxp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += spread
    return crop_nchw(gxp, padding, h, w).copy()
