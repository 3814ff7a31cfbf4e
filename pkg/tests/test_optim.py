"""Tests for the Adam optimizer."""
import math

import numpy as np
import pytest

from models.optim import AdamState, adam_step
from utils.errors import ShapeError


def reference_adam(param, grads, lr, beta1, beta2, eps):
    m = np.zeros_like(param)
    v = np.zeros_like(param)
    param = param.copy()
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        param = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return param


class TestAdam:
    """Bias-corrected Adam updates."""

    def test_matches_reference_loop(self):
        rng = np.random.default_rng(0)
        start = rng.standard_normal((3, 4))
        grads = [rng.standard_normal((3, 4)) for _ in range(25)]
        state = AdamState(learning_rate=1e-3, beta1=0.5, beta2=0.999)
        params = {'w': start.copy()}
        for g in grads:
            adam_step(state, params, {'w': g})
        np.testing.assert_allclose(params['w'], reference_adam(start, grads, 1e-3, 0.5, 0.999, 1e-8),
                                   rtol=1e-12, atol=1e-15)
        assert state.step_count == 25

    def test_first_step_moves_by_learning_rate(self):
        params = {'w': np.array([1.0, -1.0])}
        adam_step(AdamState(learning_rate=0.1), params, {'w': np.array([3.0, -0.5])})
        np.testing.assert_allclose(params['w'], [0.9, -0.9], rtol=1e-6)

    def test_zero_gradients_leave_parameters_unchanged(self):
        start = np.random.default_rng(2).standard_normal((2, 3))
        params = {'w': start.copy()}
        state = AdamState()
        for _ in range(5):
            adam_step(state, params, {'w': np.zeros((2, 3))})
        np.testing.assert_array_equal(params['w'], start)

    def test_quadratic_trajectory(self):
        lr, b1, b2, eps = 0.1, 0.5, 0.999, 1e-8
        x, m, v = 1.0, 0.0, 0.0
        expected = []
        for t in range(1, 11):
            g = 2.0 * x
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
            expected.append(x)

        params = {'x': np.array([1.0])}
        state = AdamState(learning_rate=lr, beta1=b1, beta2=b2, epsilon=eps)
        trajectory = []
        for _ in range(10):
            adam_step(state, params, {'x': 2.0 * params['x']})
            trajectory.append(float(params['x'][0]))
        np.testing.assert_allclose(trajectory, expected, rtol=1e-12, atol=1e-12)
        assert abs(trajectory[-1]) < 1.0

    def test_matches_torch(self):
        torch = pytest.importorskip('torch')
        rng = np.random.default_rng(1)
        start = rng.standard_normal(5)
        grads = [rng.standard_normal(5) for _ in range(10)]

        weight = torch.tensor(start.copy(), dtype=torch.float64, requires_grad=True)
        optimizer = torch.optim.Adam([weight], lr=1e-3, betas=(0.5, 0.999), eps=1e-8)
        for g in grads:
            optimizer.zero_grad()
            weight.grad = torch.tensor(g, dtype=torch.float64)
            optimizer.step()

        params = {'w': start.copy()}
        state = AdamState(learning_rate=1e-3, beta1=0.5, beta2=0.999)
        for g in grads:
            adam_step(state, params, {'w': g})
        np.testing.assert_allclose(params['w'], weight.detach().numpy(), rtol=1e-10, atol=1e-12)

    def test_name_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step(AdamState(), {'a': np.zeros(2)}, {'b': np.zeros(2)})

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step(AdamState(), {'a': np.zeros(2)}, {'a': np.zeros(3)})
