from __future__ import annotations

import numpy as np

from core.parameters import ParameterStore


class Adam:
    """Adaptive moment estimation with bias correction.

    Parameters whose gradient slot is empty are left untouched and their
    moments are not advanced.
    """

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8, decay: float = 1.0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.decay = decay
        self.steps = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: ParameterStore) -> None:
        self.steps += 1
        t = self.steps
        for name, param in params.items():
            g = param.grad
            if g is None:
                continue
            m = self._m.get(name)
            v = self._v.get(name)
            if m is None:
                m = np.zeros_like(param.data)
                v = np.zeros_like(param.data)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self._m[name], self._v[name] = m, v
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            param.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def end_epoch(self) -> None:
        self.lr *= self.decay
