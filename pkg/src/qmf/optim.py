"""Plain SGD and Adam over dicts of named parameter arrays.

Optimizers are functional at the array level: step() takes current values
and gradients and returns fresh arrays, never mutating its inputs. Adam
keeps first/second moment state per parameter name plus a shared step
counter for bias correction.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

OPTIMIZERS = ("sgd", "adam")


class Sgd:
    def __init__(self, learning_rate: float) -> None:
        if learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {learning_rate}")
        self.learning_rate = learning_rate

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        return {k: v - self.learning_rate * grads[k] for k, v in params.items()}


class Adam:
    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8) -> None:
        if learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {learning_rate}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigError(f"betas must lie in [0, 1), got {(beta1, beta2)}")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        self.t += 1
        out = {}
        for key, value in params.items():
            g = grads[key]
            m = self.beta1 * self._m.get(key, 0.0) + (1.0 - self.beta1) * g
            v = self.beta2 * self._v.get(key, 0.0) + (1.0 - self.beta2) * (g * g)
            self._m[key] = m
            self._v[key] = v
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            out[key] = value - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


def make_optimizer(name: str, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999):
    if name == "sgd":
        return Sgd(learning_rate)
    if name == "adam":
        return Adam(learning_rate, beta1, beta2)
    raise ConfigError(f"unknown optimizer {name!r}, expected one of {OPTIMIZERS}")
