"""Robot encoder, target encoder, scene encoder and affordance predictor."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .layers import MLP, Linear, MaxPool, Module, ReLU, bounded_score, rowwise_matmul

N_STATIC = 13  # position, normal, 3-way class one-hot, handle flag, position (again, for the relative term)
FEATURE_DIM = 128


class RobotEncoder(Module):
    def __init__(self, rng, hidden: int = 64, out: int = FEATURE_DIM):
        super().__init__()
        self.mlp = MLP([3, hidden, out], rng)

    def children(self):
        return [("mlp", self.mlp)]

    def forward(self, robot):
        return self.mlp.forward(robot)

    def backward(self, g, need_input: bool = True):
        return self.mlp.backward(g, need_input)

    def kink_margin(self):
        return self.mlp.kink_margin()


class TargetEncoder(Module):
    """Per-point shared layer, max-pooled global feature, fusion with the query point.

    Point features are ``[static (10), position (3)]`` plus a same-part flag; the
    position relative to the query point enters as ``W_rel @ (p - t)`` which is
    computed as ``W_rel @ p - W_rel @ t`` so per-cloud work can be shared across
    query points.
    """

    def __init__(self, rng, width: int = 64, out: int = FEATURE_DIM):
        super().__init__()
        self.width = width
        self.point = Linear(N_STATIC, width, rng)
        bound = 1.0 / np.sqrt(N_STATIC + 1)
        self.params["w_same"] = rng.uniform(-bound, bound, size=width)
        self.zero_grad()
        self.relu = ReLU()
        self.pool = MaxPool()
        self.fusion = Linear(2 * width, out, rng)

    def children(self):
        return [("point", self.point), ("fusion", self.fusion)]

    @property
    def w_rel(self):
        return self.point.params["W"][10:13]

    def shared(self, static):
        """Query-independent pre-activation ``[S, P] @ W + b``."""
        return self.point.forward(static)

    def forward(self, static, same, target, tp):
        B = static.shape[0]
        a = self.shared(static)
        self._target = target
        self._same = same
        pre = a + same[..., None] * self.params["w_same"] - rowwise_matmul(target, self.w_rel)[:, None, :]
        h = self.relu.forward(pre)
        glob = self.pool.forward(h)
        self._tp = tp
        local = h[np.arange(B), tp]
        return self.fusion.forward(np.concatenate([local, glob], axis=-1))

    def backward(self, g):
        B = g.shape[0]
        gz = self.fusion.backward(g)
        w = self.width
        gh = self.pool.backward(gz[:, w:])
        np.add.at(gh, (np.arange(B), self._tp), gz[:, :w])
        gpre = self.relu.backward(gh)
        self.grads["w_same"] += np.einsum("bn,bnk->k", self._same, gpre)
        # the -t @ W_rel term
        self.point.grads["W"][10:13] -= self._target.T @ gpre.sum(axis=1)
        self.point.backward(gpre, need_input=False)

    def encode_points(self, static, seg, tps, chunk: int = 32):
        """Features for many query points ``tps`` of one cloud (inference only).

        Bit-identical to ``forward`` on the corresponding single-query batches.
        """
        a = self.point.forward(static)
        w_same = self.params["w_same"]
        tps = np.asarray(tps)
        out = []
        for s in range(0, len(tps), chunk):
            idx = tps[s : s + chunk]
            t = static[idx, 10:13]
            same = (seg[None, :] == seg[idx][:, None]).astype(float)
            pre = a[None] + same[..., None] * w_same - rowwise_matmul(t, self.w_rel)[:, None, :]
            h = np.maximum(pre, 0.0)
            glob = h.max(axis=1)
            local = h[np.arange(len(idx)), idx]
            out.append(self.fusion.forward(np.concatenate([local, glob], axis=-1)))
        return np.concatenate(out) if out else np.zeros((0, self.fusion.params["W"].shape[1]))

    def kink_margin(self):
        return min(self.relu.kink_margin(), self.pool.kink_margin())


class SceneEncoder(Module):
    """Shared MLP over field vectors, max-pooled, then a linear head."""

    def __init__(self, rng, hidden=(64, 64), out: int = FEATURE_DIM, n_in: int = 3):
        super().__init__()
        self.n_in = n_in
        self.mlp = MLP([n_in, *hidden], rng, final_relu=True)
        self.pool = MaxPool()
        self.head = Linear(hidden[-1], out, rng)

    def children(self):
        return [("mlp", self.mlp), ("head", self.head)]

    def forward(self, field):
        return self.head.forward(self.pool.forward(self.mlp.forward(field)))

    def backward(self, g, need_input: bool = True):
        return self.mlp.backward(self.pool.backward(self.head.backward(g)), need_input)

    def kink_margin(self):
        return min(self.mlp.kink_margin(), self.pool.kink_margin())


class Predictor(Module):
    """Raw affordance score: ``0.5 + mlp(z)``, so a zeroed last layer gives 0.5.

    Training fits the raw score with L1; ``bounded_score`` squashes it for reporting.
    """

    OFFSET = 0.5

    def __init__(self, rng, n_in: int = 3 * FEATURE_DIM, hidden: int = 128):
        super().__init__()
        self.mlp = MLP([n_in, hidden, 1], rng)

    def children(self):
        return [("mlp", self.mlp)]

    def forward(self, z):
        return self.OFFSET + self.mlp.forward(z)[..., 0]

    def backward(self, g):
        return self.mlp.backward(g[..., None])

    def kink_margin(self):
        return self.mlp.kink_margin()


class AffordanceNet(Module):
    """The four networks wired together; ``use_field=False`` zeroes the scene feature."""

    def __init__(self, seed: int = 0, width: int = 64, feature_dim: int = FEATURE_DIM, use_field: bool = True,
                 field_dim: int = 3, scene_hidden=(64, 64), predictor_hidden: int = 128):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.feature_dim = feature_dim
        self.use_field = use_field
        self.robot = RobotEncoder(rng, width, feature_dim)
        self.target = TargetEncoder(rng, width, feature_dim)
        self.scene = SceneEncoder(rng, scene_hidden, feature_dim, field_dim)
        self.predictor = Predictor(rng, 3 * feature_dim, predictor_hidden)

    def children(self):
        return [("robot", self.robot), ("target", self.target), ("scene", self.scene), ("predictor", self.predictor)]

    def check_batch(self, batch):
        B = len(batch.robot)
        if batch.static.ndim != 3 or batch.static.shape[0] != B or batch.static.shape[2] != N_STATIC:
            raise ShapeMismatch(f"static features must be (B, N, {N_STATIC}), got {batch.static.shape}")
        if batch.same.shape != batch.static.shape[:2]:
            raise ShapeMismatch("same-part flags must be (B, N)")
        if batch.target.shape != (B, 3) or batch.tp.shape != (B,):
            raise ShapeMismatch("target must be (B, 3) and tp (B,)")
        if self.use_field and (batch.field.ndim != 3 or batch.field.shape[0] != B or
                               batch.field.shape[2] != self.scene.n_in):
            raise ShapeMismatch(f"field must be (B, K, {self.scene.n_in}), got {batch.field.shape}")

    def scene_features(self, field):
        if not self.use_field:
            return np.zeros((field.shape[0], self.feature_dim))
        return self.scene.forward(field)

    def forward(self, batch):
        """Raw (unbounded) scores and the scene features, both leading with B."""
        self.check_batch(batch)
        f_r = self.robot.forward(batch.robot)
        f_t = self.target.forward(batch.static, batch.same, batch.target, batch.tp)
        f_s = self.scene_features(batch.field)
        scores = self.predictor.forward(np.concatenate([f_r, f_t, f_s], axis=-1))
        return scores, f_s

    def predict(self, batch) -> np.ndarray:
        """Affordance scores in (0, 1)."""
        return bounded_score(self.forward(batch)[0])

    def backward(self, g_scores, g_scene=None):
        d = self.feature_dim
        gz = self.predictor.backward(g_scores)
        self.robot.backward(gz[:, :d], need_input=False)
        self.target.backward(gz[:, d : 2 * d])
        if self.use_field:
            g_s = gz[:, 2 * d :]
            if g_scene is not None:
                g_s = g_s + g_scene
            self.scene.backward(g_s, need_input=False)

    def kink_margin(self):
        m = [self.robot.kink_margin(), self.target.kink_margin(), self.predictor.kink_margin()]
        if self.use_field:
            m.append(self.scene.kink_margin())
        return min(m)

    def state_dict(self) -> dict:
        return {k: v.copy() for k, v in self.named_params()}

    def load_state_dict(self, state: dict):
        own = dict(self.named_params())
        if set(own) != set(state):
            raise ShapeMismatch("parameter names do not match")
        for k, v in own.items():
            if v.shape != state[k].shape:
                raise ShapeMismatch(f"{k}: expected {v.shape}, got {state[k].shape}")
            v[...] = state[k]
