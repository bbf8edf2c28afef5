"""Minimal numpy layers with hand-written backward passes.

Every layer keeps the activations it needs from the last ``forward`` call and
accumulates parameter gradients into ``self.grads`` on ``backward``.
"""

from __future__ import annotations

import numpy as np


def rowwise_matmul(x: np.ndarray, W: np.ndarray) -> np.ndarray:
    # einsum keeps each output row independent of its neighbours, which makes
    # pooled encoders exactly permutation invariant (BLAS blocking does not)
    return np.einsum("...k,km->...m", x, W)


class Module:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def named_params(self, prefix: str = ""):
        for k, v in self.params.items():
            yield prefix + k, v
        for name, child in self.children():
            yield from child.named_params(f"{prefix}{name}.")

    def named_grads(self, prefix: str = ""):
        for k in self.params:
            yield prefix + k, self.grads[k]
        for name, child in self.children():
            yield from child.named_grads(f"{prefix}{name}.")

    def children(self):
        return []

    def zero_all(self):
        self.zero_grad()
        for _, c in self.children():
            c.zero_all()


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        bound = 1.0 / np.sqrt(n_in)
        self.params["W"] = rng.uniform(-bound, bound, size=(n_in, n_out))
        self.params["b"] = rng.uniform(-bound, bound, size=n_out)
        self.zero_grad()

    def forward(self, x):
        self._x = x
        return rowwise_matmul(x, self.params["W"]) + self.params["b"]

    def backward(self, g, need_input: bool = True):
        W = self.params["W"]
        x2 = self._x.reshape(-1, W.shape[0])
        g2 = g.reshape(-1, W.shape[1])
        self.grads["W"] += x2.T @ g2
        self.grads["b"] += g2.sum(axis=0)
        return g @ W.T if need_input else None


class ReLU(Module):
    def forward(self, x):
        self._x = x
        self._mask = x > 0
        return np.maximum(x, 0.0)

    def kink_margin(self) -> float:
        return float(np.abs(self._x).min()) if self._x.size else np.inf

    def backward(self, g):
        return g * self._mask


def bounded_score(u, eps: float = 0.05) -> np.ndarray:
    """Strictly increasing map of raw scores onto (0, 1).

    Identity on ``[eps, 1 - eps]`` with exponential tails outside, so rankings
    and the 0.5 threshold are those of the raw score.
    """
    u = np.asarray(u, dtype=float)
    low = eps * np.exp((np.minimum(u, eps) - eps) / eps)
    high = 1.0 - eps * np.exp((1.0 - eps - np.maximum(u, 1.0 - eps)) / eps)
    return np.where(u < eps, low, np.where(u > 1.0 - eps, high, u))


class MaxPool(Module):
    """Max over the set axis (-2); the gradient goes to the first argmax."""

    def forward(self, x):
        self._x = x
        self._shape = x.shape
        self._arg = np.argmax(x, axis=-2)
        return np.take_along_axis(x, self._arg[..., None, :], axis=-2)[..., 0, :]

    def backward(self, g):
        out = np.zeros(self._shape)
        np.put_along_axis(out, self._arg[..., None, :], g[..., None, :], axis=-2)
        return out

    def kink_margin(self) -> float:
        """Smallest gap between the two largest entries of a pooled column.

        Columns whose two largest entries are both exactly zero are skipped:
        behind a rectifier they pass no gradient whichever entry wins.
        """
        if self._shape[-2] < 2:
            return np.inf
        top2 = -np.partition(-self._x, 1, axis=-2)
        first, second = np.take(top2, 0, axis=-2), np.take(top2, 1, axis=-2)
        gap = (first - second)[(first != 0) | (second != 0)]
        return float(gap.min()) if gap.size else np.inf


class MLP(Module):
    """Linear layers with ReLU between them (and after the last if ``final_relu``)."""

    def __init__(self, sizes, rng, final_relu: bool = False):
        super().__init__()
        self.sizes = tuple(sizes)
        self.layers = []
        for i in range(len(sizes) - 1):
            self.layers.append(Linear(sizes[i], sizes[i + 1], rng))
            if i < len(sizes) - 2 or final_relu:
                self.layers.append(ReLU())

    def children(self):
        return [(f"l{i}", layer) for i, layer in enumerate(self.layers) if isinstance(layer, Linear)]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, g, need_input: bool = True):
        for layer in reversed(self.layers[1:]):
            g = layer.backward(g)
        return self.layers[0].backward(g, need_input)

    def kink_margin(self) -> float:
        return min([l.kink_margin() for l in self.layers if isinstance(l, ReLU)], default=np.inf)
