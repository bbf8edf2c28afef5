"""Adam optimizer over named parameter dicts."""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteGradient


class Adam:
    def __init__(self, params: dict, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict):
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient in {k} at step {self.t}", step=self.t)
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

    def state_dict(self) -> dict:
        out = {"t": np.array([self.t], dtype=np.int64)}
        for k in self.params:
            out["m." + k] = self.m[k].copy()
            out["v." + k] = self.v[k].copy()
        return out

    def load_state_dict(self, state: dict):
        self.t = int(state["t"][0])
        for k in self.params:
            self.m[k] = state["m." + k].copy()
            self.v[k] = state["v." + k].copy()
