"""JIT kernel implementations.

Same contracts as numpy_backend; the spatial inner loops are compiled with
numba. fastmath is off and parallel loops only ever partition disjoint
output slices (batch rows or filter rows), so every output element sees a
fixed accumulation order and results are reproducible run to run.
"""

from __future__ import annotations

import warnings

import numpy as np
from numba.core.errors import NumbaWarning

warnings.filterwarnings("ignore", message=".*TBB.*", category=NumbaWarning)

from numba import njit, prange

# Reassociation lets LLVM vectorize the accumulation loops; the emitted
# order is fixed per compiled binary, so repeated runs stay bit-identical.
_FM = {"reassoc", "contract", "nsz"}

from .common import crop_nchw, out_size, pad_nchw, pool_valid_counts


@njit(cache=True, parallel=True, fastmath=_FM)
def _conv2d_fwd(xp, w, stride, ho, wo):
    n, c, _, _ = xp.shape
    o, _, kh, kw = w.shape
    out = np.zeros((n, o, ho, wo), dtype=xp.dtype)
    for ni in prange(n):
        for oi in range(o):
            orows = out[ni, oi]
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        wv = w[oi, ci, i, j]
                        for hi in range(ho):
                            row = xp[ni, ci, hi * stride + i]
                            orow = orows[hi]
                            if stride == 1:
                                for wi in range(wo):
                                    orow[wi] += wv * row[j + wi]
                            else:
                                for wi in range(wo):
                                    orow[wi] += wv * row[j + wi * stride]
    return out


@njit(cache=True, parallel=True, fastmath=_FM)
def _conv2d_bwd_w(xp, gout, kh, kw, stride):
    n, c, _, _ = xp.shape
    o, ho, wo = gout.shape[1], gout.shape[2], gout.shape[3]
    gw = np.zeros((o, c, kh, kw), dtype=xp.dtype)
    for oi in prange(o):
        local = np.zeros((c, kh, kw), dtype=np.float64)
        for ni in range(n):
            for hi in range(ho):
                grow = gout[ni, oi, hi]
                for ci in range(c):
                    for i in range(kh):
                        row = xp[ni, ci, hi * stride + i]
                        for j in range(kw):
                            acc = 0.0
                            if stride == 1:
                                for wi in range(wo):
                                    acc += grow[wi] * row[j + wi]
                            else:
                                for wi in range(wo):
                                    acc += grow[wi] * row[j + wi * stride]
                            local[ci, i, j] += acc
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    gw[oi, ci, i, j] = local[ci, i, j]
    return gw


@njit(cache=True, parallel=True, fastmath=_FM)
def _conv2d_bwd_x(w, gout, gxp, stride):
    o, c, kh, kw = w.shape
    n, _, ho, wo = gout.shape
    for ni in prange(n):
        for ci in range(c):
            for oi in range(o):
                for i in range(kh):
                    for j in range(kw):
                        wv = w[oi, ci, i, j]
                        for hi in range(ho):
                            grow = gout[ni, oi, hi]
                            gxrow = gxp[ni, ci, hi * stride + i]
                            if stride == 1:
                                for wi in range(wo):
                                    gxrow[j + wi] += wv * grow[wi]
                            else:
                                for wi in range(wo):
                                    gxrow[j + wi * stride] += wv * grow[wi]


@njit(cache=True, parallel=True, fastmath=_FM)
def _depthwise_fwd(xp, w, stride, ho, wo):
    n, c, _, _ = xp.shape
    kh, kw = w.shape[1], w.shape[2]
    out = np.zeros((n, c, ho, wo), dtype=xp.dtype)
    for ni in prange(n):
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    wv = w[ci, i, j]
                    for hi in range(ho):
                        row = xp[ni, ci, hi * stride + i]
                        orow = out[ni, ci, hi]
                        if stride == 1:
                            for wi in range(wo):
                                orow[wi] += wv * row[j + wi]
                        else:
                            for wi in range(wo):
                                orow[wi] += wv * row[j + wi * stride]
    return out


@njit(cache=True, parallel=True, fastmath=_FM)
def _depthwise_bwd(xp, w, gout, gxp, need_gx, stride):
    n, c, _, _ = xp.shape
    kh, kw = w.shape[1], w.shape[2]
    ho, wo = gout.shape[2], gout.shape[3]
    gw = np.zeros((c, kh, kw), dtype=xp.dtype)
    for ci in prange(c):
        for i in range(kh):
            for j in range(kw):
                wv = w[ci, i, j]
                acc = 0.0
                for ni in range(n):
                    for hi in range(ho):
                        grow = gout[ni, ci, hi]
                        row = xp[ni, ci, hi * stride + i]
                        gxrow = gxp[ni, ci, hi * stride + i]
                        for wi in range(wo):
                            acc += grow[wi] * row[j + wi * stride]
                        if need_gx:
                            for wi in range(wo):
                                gxrow[j + wi * stride] += wv * grow[wi]
                gw[ci, i, j] = acc
    return gw


@njit(cache=True, parallel=True)
def _maxpool_fwd(xp, k, stride, ho, wo):
    n, c, _, _ = xp.shape
    out = np.empty((n, c, ho, wo), dtype=xp.dtype)
    argmax = np.empty((n, c, ho, wo), dtype=np.int64)
    for ni in prange(n):
        for ci in range(c):
            for hi in range(ho):
                for wi in range(wo):
                    best = -np.inf
                    bidx = 0
                    for i in range(k):
                        row = xp[ni, ci, hi * stride + i]
                        for j in range(k):
                            v = row[wi * stride + j]
                            if v > best:  # strict: ties keep first scan index
                                best = v
                                bidx = i * k + j
                    out[ni, ci, hi, wi] = best
                    argmax[ni, ci, hi, wi] = bidx
    return out, argmax


@njit(cache=True, parallel=True)
def _maxpool_bwd(argmax, gout, gxp, k, stride):
    n, c, ho, wo = gout.shape
    for ni in prange(n):
        for ci in range(c):
            for hi in range(ho):
                for wi in range(wo):
                    idx = argmax[ni, ci, hi, wi]
                    gxp[ni, ci, hi * stride + idx // k, wi * stride + idx % k] += gout[
                        ni, ci, hi, wi
                    ]


@njit(cache=True, parallel=True, fastmath=_FM)
def _avgpool_fwd(xp, counts_h, counts_w, k, stride, ho, wo):
    n, c, _, _ = xp.shape
    out = np.zeros((n, c, ho, wo), dtype=xp.dtype)
    for ni in prange(n):
        for ci in range(c):
            for hi in range(ho):
                for wi in range(wo):
                    acc = 0.0
                    for i in range(k):
                        row = xp[ni, ci, hi * stride + i]
                        for j in range(k):
                            acc += row[wi * stride + j]
                    out[ni, ci, hi, wi] = acc / (counts_h[hi] * counts_w[wi])
    return out


@njit(cache=True, parallel=True, fastmath=_FM)
def _avgpool_bwd(gout, counts_h, counts_w, gxp, k, stride):
    n, c, ho, wo = gout.shape
    for ni in prange(n):
        for ci in range(c):
            for hi in range(ho):
                for wi in range(wo):
                    g = gout[ni, ci, hi, wi] / (counts_h[hi] * counts_w[wi])
                    for i in range(k):
                        gxrow = gxp[ni, ci, hi * stride + i]
                        for j in range(k):
                            gxrow[wi * stride + j] += g
    return gxp


def conv2d_forward(x, w, stride=1, padding=0):
    kh = w.shape[2]
    xp = pad_nchw(x, padding)
    ho = out_size(x.shape[2], kh, stride, padding)
    wo = out_size(x.shape[3], kh, stride, padding)
    return _conv2d_fwd(np.ascontiguousarray(xp), w, stride, ho, wo)


def conv2d_backward(x, w, gout, stride=1, padding=0, need_gx=True):
    kh = w.shape[2]
    xp = np.ascontiguousarray(pad_nchw(x, padding))
    gw = _conv2d_bwd_w(xp, gout, kh, kh, stride)
    if not need_gx:
        return None, gw
    gxp = np.zeros_like(xp)
    _conv2d_bwd_x(w, gout, gxp, stride)
    return crop_nchw(gxp, padding, x.shape[2], x.shape[3]).copy(), gw


def depthwise_forward(x, w, stride=1, padding=0):
    kh = w.shape[1]
    xp = pad_nchw(x, padding)
    ho = out_size(x.shape[2], kh, stride, padding)
    wo = out_size(x.shape[3], kh, stride, padding)
    return _depthwise_fwd(np.ascontiguousarray(xp), w, stride, ho, wo)


def depthwise_backward(x, w, gout, stride=1, padding=0, need_gx=True):
    xp = np.ascontiguousarray(pad_nchw(x, padding))
    gxp = np.zeros_like(xp)
    gw = _depthwise_bwd(xp, w, gout, gxp, need_gx, stride)
    if not need_gx:
        return None, gw
    return crop_nchw(gxp, padding, x.shape[2], x.shape[3]).copy(), gw


def maxpool_forward(x, k, stride=1, padding=0):
    xp = np.ascontiguousarray(pad_nchw(x, padding, value=-np.inf))
    ho = out_size(x.shape[2], k, stride, padding)
    wo = out_size(x.shape[3], k, stride, padding)
    return _maxpool_fwd(xp, k, stride, ho, wo)


def maxpool_backward(hw, argmax, gout, k, stride=1, padding=0):
    h, w = hw
    n, c = gout.shape[0], gout.shape[1]
    gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=gout.dtype)
    _maxpool_bwd(argmax, gout, gxp, k, stride)
    return crop_nchw(gxp, padding, h, w).copy()


def avgpool_forward(x, k, stride=1, padding=0):
    h, w = x.shape[2], x.shape[3]
    xp = np.ascontiguousarray(pad_nchw(x, padding))
    ho = out_size(h, k, stride, padding)
    wo = out_size(w, k, stride, padding)
    ch = pool_valid_counts(h, k, stride, padding).astype(x.dtype)
    cw = pool_valid_counts(w, k, stride, padding).astype(x.dtype)
    return _avgpool_fwd(xp, ch, cw, k, stride, ho, wo)


def avgpool_backward(hw, gout, k, stride=1, padding=0):
    h, w = hw
    n, c = gout.shape[0], gout.shape[1]
    ch = pool_valid_counts(h, k, stride, padding).astype(gout.dtype)
    cw = pool_valid_counts(w, k, stride, padding).astype(gout.dtype)
    gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=gout.dtype)
    _avgpool_bwd(gout, ch, cw, gxp, k, stride)
    return gxp if padding == 0 else crop_nchw(gxp, padding, h, w).copy()
