"""Turning (cloud, robot, point) queries into padded network inputs."""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from ..cloud import LabeledCloud
from ..field import significant_for_point


@dataclass(frozen=True, eq=False)
class Query:
    """Score request: affordance of ``cloud`` point ``point_index`` for ``robot``."""

    cloud: LabeledCloud
    robot: np.ndarray
    point_index: int

    @property
    def target(self) -> np.ndarray:
        return self.cloud.points[self.point_index]


@dataclass(frozen=True, eq=False)
class Batch:
    static: np.ndarray  # (B, N, 13)
    same: np.ndarray  # (B, N)
    target: np.ndarray  # (B, 3)
    tp: np.ndarray  # (B,)
    field: np.ndarray  # (B, K, F)
    robot: np.ndarray  # (B, 3)

    def __len__(self):
        return len(self.robot)


def static_features(cloud: LabeledCloud) -> np.ndarray:
    """``[p, n, is_part, is_body, is_occluder, handle, p]`` per point."""
    seg = cloud.seg
    onehot = np.stack([seg >= 0, seg == -1, seg <= -2], axis=1).astype(float)
    return np.concatenate(
        [cloud.points, cloud.normals, onehot, cloud.handle[:, None].astype(float), cloud.points], axis=1
    )


class FeatureCache:
    """Per-cloud static features and per-query field selections, keyed weakly on clouds."""

    def __init__(self, k: int, include_target_points: bool = False, with_coords: bool = False,
                 robot_height: float = 0.0):
        self.k = k
        # the field is anchored this far above the robot base
        self.robot_height = robot_height
        self.include_target_points = include_target_points
        self.with_coords = with_coords
        self._static = weakref.WeakKeyDictionary()
        self._field = weakref.WeakKeyDictionary()

    def static(self, cloud):
        s = self._static.get(cloud)
        if s is None:
            s = self._static[cloud] = static_features(cloud)
        return s

    def field(self, q: Query) -> np.ndarray:
        per_cloud = self._field.setdefault(q.cloud, {})
        key = (np.asarray(q.robot, float).tobytes(), int(q.point_index))
        f = per_cloud.get(key)
        if f is None:
            anchor = np.asarray(q.robot, float) + [0.0, 0.0, self.robot_height]
            sel = significant_for_point(q.cloud, anchor, q.point_index, self.k, self.include_target_points)
            f = sel.values
            if self.with_coords:
                f = np.concatenate([f, q.cloud.points[sel.indices] - q.target], axis=1)
            if len(f) == 0:
                f = np.zeros((1, 6 if self.with_coords else 3))
            per_cloud[key] = f
        return f

    @property
    def field_dim(self) -> int:
        return 6 if self.with_coords else 3


def _pad(arrays, length):
    # repeating the first row leaves every max-pool unchanged
    out = []
    for a in arrays:
        if len(a) < length:
            a = np.concatenate([a, np.repeat(a[:1], length - len(a), axis=0)])
        out.append(a)
    return np.stack(out)


def build_batch(queries, cache: FeatureCache, use_field: bool = True) -> Batch:
    statics, sames = [], []
    for q in queries:
        statics.append(cache.static(q.cloud))
        seg = q.cloud.seg
        sames.append((seg == seg[q.point_index]).astype(float))
    n = max(len(s) for s in statics)
    static = _pad(statics, n)
    same = _pad([s[:, None] for s in sames], n)[..., 0]
    target = np.stack([q.cloud.points[q.point_index] for q in queries])
    tp = np.array([q.point_index for q in queries], dtype=np.int64)
    robot = np.stack([np.asarray(q.robot, float) for q in queries])
    if use_field:
        fields = [cache.field(q) for q in queries]
        field = _pad(fields, max(len(f) for f in fields))
    else:
        field = np.zeros((len(queries), 1, cache.field_dim))
    return Batch(static, same, target, tp, field, robot)
