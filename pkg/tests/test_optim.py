import math

import numpy as np
import pytest

from fedpb.errors import LengthMismatch
from fedpb.nn.optim import AdamState, adam_step, clip_by_global_norm


def test_zero_gradient_leaves_params():
    x = np.array([1.0, -2.0])
    s = AdamState.zeros(2)
    y, s = adam_step(x, np.zeros(2), s, lr=1e-4)
    assert np.array_equal(x, y) and s.t == 1


def test_first_step_magnitude_is_lr():
    g = np.array([3.0, -0.02, 1e-3])
    y, _ = adam_step(np.zeros(3), g, AdamState.zeros(3), lr=1e-4)
    np.testing.assert_allclose(y, -1e-4 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    np.testing.assert_allclose(np.abs(y), 1e-4, rtol=1e-4)


def test_three_steps_on_quadratic_match_hand_iteration():
    # f(x) = (x - 3)^2, grad 2 (x - 3)
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    x, m, v = 0.0, 0.0, 0.0
    hand = []
    for t in range(1, 4):
        g = 2.0 * (x - 3.0)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        hand.append(x)
    vec, state = np.array([0.0]), AdamState.zeros(1)
    for want in hand:
        vec, state = adam_step(vec, 2.0 * (vec - 3.0), state, lr=lr)
        assert vec[0] == pytest.approx(want, rel=1e-15)
    assert state.t == 3


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        adam_step(np.zeros(3), np.zeros(2), AdamState.zeros(3))


def test_clip_by_global_norm():
    g = np.array([3.0, 4.0])
    assert clip_by_global_norm(g, None) is g
    np.testing.assert_allclose(clip_by_global_norm(g, 1.0), [0.6, 0.8])
    np.testing.assert_array_equal(clip_by_global_norm(g, 10.0), g)
