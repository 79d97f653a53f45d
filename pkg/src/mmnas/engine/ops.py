"""Differentiable operations: exactly the set the compiled networks need."""

from __future__ import annotations

import numpy as np

from .. import kernels as K
from .tensor import ShapeError, Tensor, make_node


def _check_dtype(op: str, *tensors: Tensor) -> None:
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ShapeError(f"{op}: mixed dtypes {sorted(str(d) for d in dtypes)}")


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation, NCHW in, (O, C, k, k) weights, odd square kernels."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: need 4-d input/weight, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"conv2d: input channels {x.shape[1]} != weight channels {w.shape[1]} "
            f"(input {x.shape}, weight {w.shape})"
        )
    if w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
        raise ShapeError(f"conv2d: kernel must be square and odd, got {w.shape}")
    _check_dtype("conv2d", x, w)
    out = K.conv2d_forward(x.data, w.data, stride, padding)
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ShapeError(f"conv2d: bias shape {b.shape} != ({w.shape[0]},)")
        out = out + b.data[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)

    def backward(gout):
        gx, gw = K.conv2d_backward(x.data, w.data, gout, stride, padding, need_gx=x.requires_grad)
        if gx is not None:
            x.accumulate(gx)
        w.accumulate(gw)
        if b is not None:
            b.accumulate(gout.sum(axis=(0, 2, 3)))

    return make_node(out, parents, "conv2d", backward)


def sep_conv2d(
    x: Tensor, dw: Tensor, pw: Tensor, b: Tensor | None, stride: int = 1, padding: int = 0
) -> Tensor:
    """Depthwise k x k stage then pointwise 1 x 1 stage; bias on the pointwise stage.

    dw is (C, k, k), one filter per input channel; pw is (O, C).
    """
    if x.shape[1] != dw.shape[0]:
        raise ShapeError(
            f"sep_conv2d: input channels {x.shape[1]} != depthwise filters {dw.shape[0]}"
        )
    if pw.shape[1] != dw.shape[0]:
        raise ShapeError(
            f"sep_conv2d: pointwise in-channels {pw.shape[1]} != depthwise filters {dw.shape[0]}"
        )
    _check_dtype("sep_conv2d", x, dw, pw)
    mid = K.depthwise_forward(x.data, dw.data, stride, padding)
    out = np.einsum("oc,nchw->nohw", pw.data, mid)
    if b is not None:
        out = out + b.data[None, :, None, None]
    parents = (x, dw, pw) if b is None else (x, dw, pw, b)

    def backward(gout):
        pw.accumulate(np.einsum("nohw,nchw->oc", gout, mid))
        gmid = np.einsum("nohw,oc->nchw", gout, pw.data)
        gx, gdw = K.depthwise_backward(
            x.data, dw.data, gmid, stride, padding, need_gx=x.requires_grad
        )
        if gx is not None:
            x.accumulate(gx)
        dw.accumulate(gdw)
        if b is not None:
            b.accumulate(gout.sum(axis=(0, 2, 3)))

    return make_node(out, parents, "sep_conv2d", backward)


def max_pool(x: Tensor, k: int = 3, stride: int = 1, padding: int = 1) -> Tensor:
    out, argmax = K.maxpool_forward(x.data, k, stride, padding)
    hw = (x.shape[2], x.shape[3])

    def backward(gout):
        x.accumulate(K.maxpool_backward(hw, argmax, gout, k, stride, padding))

    return make_node(out, (x,), "max_pool", backward)


def avg_pool(x: Tensor, k: int = 3, stride: int = 1, padding: int = 1) -> Tensor:
    out = K.avgpool_forward(x.data, k, stride, padding)
    hw = (x.shape[2], x.shape[3])

    def backward(gout):
        x.accumulate(K.avgpool_backward(hw, gout, k, stride, padding))

    return make_node(out, (x,), "avg_pool", backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Spatial mean per channel: NCHW -> (N, C)."""
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))

    def backward(gout):
        x.accumulate(np.broadcast_to(gout[:, :, None, None] / (h * w), x.shape))

    return make_node(out, (x,), "global_avg_pool", backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """(N, F) @ (H, F)^T + (H,) -> (N, H)."""
    if x.data.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"linear: bias {b.shape} != ({w.shape[0]},)")
    _check_dtype("linear", x, w, b)
    out = x.data @ w.data.T + b.data

    def backward(gout):
        if x.requires_grad:
            x.accumulate(gout @ w.data)
        w.accumulate(gout.T @ x.data)
        b.accumulate(gout.sum(axis=0))

    return make_node(out, (x, w, b), "linear", backward)


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def backward(gout):
        offset = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                index = [slice(None)] * gout.ndim
                index[axis] = slice(offset, offset + size)
                t.accumulate(gout[tuple(index)])
            offset += size

    return make_node(out, tuple(tensors), "concat", backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")

    def backward(gout):
        a.accumulate(gout)
        b.accumulate(gout)

    return make_node(a.data + b.data, (a, b), "add", backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(gout):
        x.accumulate(gout * mask)

    return make_node(np.where(mask, x.data, 0), (x,), "relu", backward)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(gout):
        x.accumulate(gout * (1.0 - out * out))

    return make_node(out, (x,), "tanh", backward)


def sigmoid(x: Tensor) -> Tensor:
    z = x.data
    out = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    out = out.astype(z.dtype, copy=False)

    def backward(gout):
        x.accumulate(gout * out * (1.0 - out))

    return make_node(out, (x,), "sigmoid", backward)


def identity(x: Tensor) -> Tensor:
    return x


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy over the batch, log-sum-exp stabilized."""
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits must be (N, K), got {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"softmax_cross_entropy: labels shape {labels.shape} != ({n},)")
    bad = np.where((labels < 0) | (labels >= k))[0]
    if bad.size:
        raise ShapeError(
            f"softmax_cross_entropy: label {labels[bad[0]]} out of range [0, {k}) at index {bad[0]}"
        )
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    denom = ez.sum(axis=1, keepdims=True)
    log_denom = np.log(denom[:, 0])
    per_sample = log_denom - z[np.arange(n), labels]
    loss = np.asarray(per_sample.mean(), dtype=logits.dtype)

    def backward(gout):
        probs = ez / denom
        probs[np.arange(n), labels] -= 1.0
        logits.accumulate(probs * (gout / n))

    return make_node(loss, (logits,), "softmax_cross_entropy", backward)


ACTIVATIONS = {
    "relu": relu,
    "tanh": tanh,
    "identity": identity,
    "sigmoid": sigmoid,
}
