"""
GAN Ensemble Lab - Adam Optimizer
Bias-corrected Adam over a named parameter registry.
"""
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from utils.errors import ShapeError


@dataclass
class AdamState:
    """Moments per parameter plus hyperparameters and the step counter."""
    learning_rate: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    def hyperparameters(self) -> Dict[str, float]:
        return {'learning_rate': self.learning_rate, 'beta1': self.beta1,
                'beta2': self.beta2, 'epsilon': self.epsilon}


def adam_step(state: AdamState, params: Dict[str, np.ndarray],
              grads: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """
    Apply one Adam update in place.

    Args:
        state: Optimizer state; moments are created lazily on first use
        params: Name -> parameter array (updated in place)
        grads: Name -> gradient array of identical shape

    Returns:
        The updated parameter registry
    """
    if set(params) != set(grads):
        raise ShapeError(f"parameter/gradient names differ: {sorted(set(params) ^ set(grads))}")
    for name, value in params.items():
        if grads[name].shape != value.shape:
            raise ShapeError(f"{name}: gradient shape {grads[name].shape} != parameter shape {value.shape}")
        moment = state.first_moment.get(name)
        if moment is not None and moment.shape != value.shape:
            raise ShapeError(f"{name}: moment shape {moment.shape} != parameter shape {value.shape}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t
    for name, value in params.items():
        g = grads[name]
        m = state.first_moment.setdefault(name, np.zeros_like(value))
        v = state.second_moment.setdefault(name, np.zeros_like(value))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / correction1
        v_hat = v / correction2
        value -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params
