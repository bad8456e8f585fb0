"""SGD and Adam, both with decoupled weight decay.

Optimizer state is keyed by parameter name so one optimizer instance can serve several
training phases whose parameter sets are disjoint.
"""

from dataclasses import dataclass, field

import numpy as np

from intentspace.errors import ConfigError, ShapeError


def _check_shapes(param: np.ndarray, grad: np.ndarray):
    if np.shape(param) != np.shape(grad):
        raise ShapeError(f'gradient shape {np.shape(grad)} != parameter shape {np.shape(param)}')


def sgd_step(param: np.ndarray, grad: np.ndarray, lr: float, weight_decay: float = 0.0,
             ) -> np.ndarray:
    """Return param - lr * grad - lr * weight_decay * param."""
    _check_shapes(param, grad)
    return param - lr * grad - lr * weight_decay * param


@dataclass
class AdamState:
    """First and second moment estimates of one parameter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              weight_decay: float = 0.0) -> np.ndarray:
    """Bias-corrected Adam update; state is updated in place."""
    _check_shapes(param, grad)
    _check_shapes(state.m, grad)
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps) - lr * weight_decay * param


class SGD:
    """Plain stochastic gradient descent."""

    def __init__(self, lr: float, weight_decay: float = 0.0):
        if lr <= 0:
            raise ConfigError('learning rate must be positive')
        self.lr = lr
        self.weight_decay = weight_decay

    def step(self, name: str, param: np.ndarray, grad: np.ndarray, decay: bool = True,
             ) -> np.ndarray:
        return sgd_step(param, grad, self.lr, self.weight_decay if decay else 0.0)


@dataclass
class Adam:
    """Adam with per-parameter state."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    state: dict[str, AdamState] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError('learning rate must be positive')

    def step(self, name: str, param: np.ndarray, grad: np.ndarray, decay: bool = True,
             ) -> np.ndarray:
        st = self.state.get(name)
        if st is None or st.m.shape != np.shape(grad):
            st = self.state[name] = AdamState(np.zeros_like(grad), np.zeros_like(grad))
        return adam_step(param, grad, st, self.lr, self.beta1, self.beta2, self.eps,
                         self.weight_decay if decay else 0.0)
