"""Bias-corrected Adam with the canonical moment constants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def for_param(cls, param: np.ndarray) -> AdamState:
        return cls(m=np.zeros_like(param), v=np.zeros_like(param))


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], states: list[AdamState], lr: float) -> None:
    """One update, in place, on each (param, grad, state) triple."""
    for p, g, s in zip(params, grads, states):
        if p.shape != g.shape or p.shape != s.m.shape:
            raise ValueError(f"adam_step: shape mismatch {p.shape} / {g.shape} / {s.m.shape}")
        s.t += 1
        s.m *= BETA1
        s.m += (1.0 - BETA1) * g
        s.v *= BETA2
        s.v += (1.0 - BETA2) * (g * g)
        m_hat = s.m / (1.0 - BETA1**s.t)
        v_hat = s.v / (1.0 - BETA2**s.t)
        p -= (lr * m_hat / (np.sqrt(v_hat) + EPS)).astype(p.dtype, copy=False)
