#!/usr/bin/env python3
"""Benchmark the JIT kernels against the pure-numpy fallback.

Shapes mirror the desk-scale training workload (batch 32, width 16,
16x16 feature maps) plus one larger audio-style map. Run:

    python3 benchmarks/bench_kernels.py
"""

from __future__ import annotations

import time

import numpy as np

from mmnas.kernels import numba_backend, numpy_backend

CASES = [
    ("conv3x3  32x16x16x16", "conv", dict(k=3, n=32, c=16, o=16, hw=16, padding=1)),
    ("conv5x5  32x16x16x16", "conv", dict(k=5, n=32, c=16, o=16, hw=16, padding=2)),
    ("conv3x3  8x16x112x112", "conv", dict(k=3, n=8, c=16, o=16, hw=112, padding=1)),
    ("depthwise3x3 32x16x16x16", "depthwise", dict(k=3, n=32, c=16, hw=16, padding=1)),
    ("maxpool3x3 32x16x16x16", "maxpool", dict(k=3, n=32, c=16, hw=16, padding=1)),
    ("avgpool3x3 32x16x16x16", "avgpool", dict(k=3, n=32, c=16, hw=16, padding=1)),
]


def make_inputs(kind, spec, rng):
    x = rng.standard_normal((spec["n"], spec["c"], spec["hw"], spec["hw"])).astype(np.float32)
    if kind == "conv":
        w = rng.standard_normal((spec["o"], spec["c"], spec["k"], spec["k"])).astype(np.float32)
        return x, w
    if kind == "depthwise":
        w = rng.standard_normal((spec["c"], spec["k"], spec["k"])).astype(np.float32)
        return x, w
    return x, None


def run_case(backend, kind, spec, x, w):
    k, padding = spec["k"], spec["padding"]
    if kind == "conv":
        out = backend.conv2d_forward(x, w, 1, padding)
        backend.conv2d_backward(x, w, out, 1, padding)
    elif kind == "depthwise":
        out = backend.depthwise_forward(x, w, 1, padding)
        backend.depthwise_backward(x, w, out, 1, padding)
    elif kind == "maxpool":
        out, argmax = backend.maxpool_forward(x, k, 1, padding)
        backend.maxpool_backward((x.shape[2], x.shape[3]), argmax, out, k, 1, padding)
    else:
        out = backend.avgpool_forward(x, k, 1, padding)
        backend.avgpool_backward((x.shape[2], x.shape[3]), out, k, 1, padding)


def bench(backend, kind, spec, x, w, repeats=20):
    run_case(backend, kind, spec, x, w)  # warmup / JIT compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        run_case(backend, kind, spec, x, w)
    return (time.perf_counter() - t0) / repeats * 1000


def main():
    rng = np.random.default_rng(0)
    print(f"{'case':<28} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    print("-" * 60)
    for label, kind, spec in CASES:
        x, w = make_inputs(kind, spec, rng)
        t_jit = bench(numba_backend, kind, spec, x, w)
        t_np = bench(numpy_backend, kind, spec, x, w)
        print(f"{label:<28} {t_jit:>10.2f} {t_np:>10.2f} {t_np / t_jit:>7.2f}x")


if __name__ == "__main__":
    main()
