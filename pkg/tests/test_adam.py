from __future__ import annotations

import numpy as np
import pytest

from mmnas.engine.adam import BETA1, BETA2, EPS, AdamState, adam_step


def test_zero_gradient_leaves_params_unchanged():
    p = np.array([1.0, -2.0, 3.0])
    state = AdamState.for_param(p)
    adam_step([p], [np.zeros_like(p)], [state], lr=1e-2)
    np.testing.assert_array_equal(p, [1.0, -2.0, 3.0])
    assert state.t == 1


def test_first_step_magnitude_is_about_lr():
    p = np.array([0.0])
    state = AdamState.for_param(p)
    adam_step([p], [np.array([1.0])], [state], lr=1e-3)
    # bias-corrected first step: m_hat = v_hat = 1, update = lr / (1 + eps)
    assert p[0] == pytest.approx(-1e-3, rel=1e-6)


def test_ten_step_quadratic_matches_scripted_reference():
    # minimize 0.5 * (x - 3)^2 from x = 0; gradient is (x - 3)
    lr = 0.1
    x = np.array([0.0])
    state = AdamState.for_param(x)

    # scripted reference, written straight from the update equations
    xr = 0.0
    m = 0.0
    v = 0.0
    expect = []
    for t in range(1, 11):
        g = xr - 3.0
        m = BETA1 * m + (1 - BETA1) * g
        v = BETA2 * v + (1 - BETA2) * g * g
        m_hat = m / (1 - BETA1**t)
        v_hat = v / (1 - BETA2**t)
        xr = xr - lr * m_hat / (np.sqrt(v_hat) + EPS)
        expect.append(xr)

    got = []
    for _ in range(10):
        adam_step([x], [x - 3.0], [state], lr=lr)
        got.append(float(x[0]))

    np.testing.assert_allclose(got, expect, atol=1e-10, rtol=0)


def test_step_counter_and_moment_shapes():
    p = np.zeros((2, 3))
    state = AdamState.for_param(p)
    assert state.m.shape == p.shape and state.v.shape == p.shape
    for i in range(5):
        adam_step([p], [np.ones_like(p)], [state], lr=1e-4)
        assert state.t == i + 1


def test_shape_mismatch_raises():
    p = np.zeros(3)
    state = AdamState.for_param(p)
    with pytest.raises(ValueError, match="shape mismatch"):
        adam_step([p], [np.zeros(4)], [state], lr=1e-4)
