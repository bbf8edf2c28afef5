"""Geometric ground-truth labels for push / pull interactions.

An interaction succeeds when the target point is within reach, a straight
three-phase end-effector path (approach, contact, stroke along the point normal)
clears every obstacle, pulls grab a handle, and the stroke moves the joint far
enough without the moving part sweeping into an occluder.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .cloud import LabeledCloud
from .errors import InvalidPoint
from .geometry import Capsule, OrientedBox, Primitive, primitives_overlap
from .scene import PRISMATIC, Scene

PUSH = "push"
PULL = "pull"
ACTIONS = (PUSH, PULL)

UNREACHABLE = "unreachable"
APPROACH_COLLISION = "approach_collision"
NOT_GRASPABLE = "not_graspable"
MANIPULATION_COLLISION = "manipulation_collision"
INSUFFICIENT_MOTION = "insufficient_motion"
FAILURE_REASONS = (UNREACHABLE, APPROACH_COLLISION, NOT_GRASPABLE, MANIPULATION_COLLISION, INSUFFICIENT_MOTION)


@dataclass(frozen=True)
class OracleConfig:
    r_min: float = 0.25
    r_max: float = 1.05
    r_ee: float = 0.04
    d_approach: float = 0.08
    push_travel: float = 0.10
    pull_travel: float = 0.10
    theta_min_prismatic: float = 0.03
    theta_min_revolute: float = 0.1
    ee_height: float = 0.5
    step: float = 0.01
    sweep_states: int = 8

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value <= 0:
                raise ValueError(f"OracleConfig.{name} must be positive")
        if not self.r_min < self.r_max:
            raise ValueError("OracleConfig requires r_min < r_max")
        if self.step > self.r_ee / 4 + 1e-12:
            raise ValueError("OracleConfig requires step <= r_ee / 4")


@dataclass(frozen=True)
class Verdict:
    label: int
    failure_reason: Optional[str] = None

    def __post_init__(self):
        if (self.label == 1) != (self.failure_reason is None):
            raise ValueError("label 1 iff no failure reason")

    @property
    def success(self) -> bool:
        return self.label == 1


SUCCESS = Verdict(1)


def _stroke_sign(action: str) -> float:
    if action == PUSH:
        return -1.0
    if action == PULL:
        return 1.0
    raise ValueError(f"unknown action {action!r}")


def explain_path(scene: Scene, cloud: LabeledCloud, point_index: int, action: str, cfg: OracleConfig = OracleConfig()):
    """The three swept segments: approach, contact, manipulation stroke."""
    _check_point(cloud, point_index)
    tp = cloud.points[point_index]
    n = cloud.normals[point_index]
    start = scene.robot + np.array([0.0, 0.0, cfg.ee_height])
    pre = tp + cfg.d_approach * n
    travel = cfg.push_travel if action == PUSH else cfg.pull_travel
    end = tp + _stroke_sign(action) * travel * n
    return [Capsule(start, pre, cfg.r_ee), Capsule(pre, tp, cfg.r_ee), Capsule(tp, end, cfg.r_ee)]


def _check_point(cloud: LabeledCloud, point_index: int) -> int:
    if not 0 <= point_index < len(cloud):
        raise InvalidPoint(f"point index {point_index} out of range")
    part = int(cloud.seg[point_index])
    if part < 0:
        raise InvalidPoint(f"point {point_index} is not on a target part (seg={part})")
    return part


def _capsules_hit(capsules: Sequence[Capsule], prims: Sequence[Primitive], step: float) -> bool:
    if not prims or not capsules:
        return False
    pts = np.concatenate([c.samples(step) for c in capsules])
    radius = capsules[0].radius
    boxes = [p for p in prims if isinstance(p, OrientedBox)]
    if boxes:
        C = np.stack([b.center for b in boxes])
        H = np.stack([b.half_extents for b in boxes])
        R = np.stack([b.rotation for b in boxes])
        local = np.einsum("pk,bkj->pbj", pts, R) - np.einsum("bk,bkj->bj", C, R)[None]
        q = np.abs(local) - H[None]
        d = np.linalg.norm(np.maximum(q, 0.0), axis=-1) + np.minimum(q.max(axis=-1), 0.0)
        if np.any(d < radius):
            return True
    return any(np.any(p.sdf(pts) < radius) for p in prims if not isinstance(p, OrientedBox))


def _obstacles(scene: Scene, part: int):
    """(static target solids, moving solids, occluders) for manipulating ``part``."""
    static, moving = list(scene.body_world()), []
    for i in range(len(scene.target.parts)):
        shape, handle = scene.part_world(i)
        dest = moving if i == part else static
        dest.append(shape)
        if handle is not None:
            dest.append(handle)
    return static, moving, scene.occluder_prims()


def joint_motion(scene: Scene, part: int, point, stroke) -> tuple:
    """``(current state, reached state)`` when ``stroke`` is applied at ``point``."""
    joint = scene.joint_world(part)
    w = joint.point_velocity(np.asarray(point, float))
    ww = float(w @ w)
    dq = 0.0 if ww < 1e-12 else float(np.asarray(stroke) @ w) / ww
    q = joint.state
    return q, float(np.clip(q + dq, joint.lo, joint.hi))


def evaluate(
    scene: Scene, cloud: LabeledCloud, point_index: int, action: str, cfg: OracleConfig = OracleConfig()
) -> Verdict:
    part = _check_point(cloud, point_index)
    _stroke_sign(action)
    tp = cloud.points[point_index]
    n = cloud.normals[point_index]

    reach = float(np.linalg.norm(tp - scene.robot))
    if not cfg.r_min <= reach <= cfg.r_max:
        return Verdict(0, UNREACHABLE)

    approach, contact, stroke = explain_path(scene, cloud, point_index, action, cfg)
    static, moving, occluders = _obstacles(scene, part)
    # the approach leg must also stay clear of the manipulated part itself
    if _capsules_hit([approach], static + occluders + moving, cfg.step):
        return Verdict(0, APPROACH_COLLISION)
    if _capsules_hit([contact], static + occluders, cfg.step):
        return Verdict(0, APPROACH_COLLISION)
    if _capsules_hit([stroke], static + occluders, cfg.step):
        return Verdict(0, MANIPULATION_COLLISION)

    if action == PULL and not cloud.handle[point_index]:
        return Verdict(0, NOT_GRASPABLE)

    q, q_end = joint_motion(scene, part, tp, stroke.b - stroke.a)
    kind = scene.target.parts[part].joint.kind
    theta_min = cfg.theta_min_prismatic if kind == PRISMATIC else cfg.theta_min_revolute
    if abs(q_end - q) < theta_min:
        return Verdict(0, INSUFFICIENT_MOTION)
    if occluders:
        for s in np.linspace(q, q_end, cfg.sweep_states + 1)[1:]:
            shape, handle = scene.part_world(part, float(s))
            for solid in (shape, handle):
                if solid is not None and any(primitives_overlap(solid, o, cfg.step) for o in occluders):
                    return Verdict(0, MANIPULATION_COLLISION)
    return SUCCESS


def recheck_path(scene: Scene, cloud: LabeledCloud, point_index: int, action: str, capsules, cfg=OracleConfig()) -> bool:
    """True when the given path is collision free under the same obstacle rules."""
    part = _check_point(cloud, point_index)
    static, moving, occluders = _obstacles(scene, part)
    approach, contact, stroke = capsules
    return not (
        _capsules_hit([approach], static + occluders + moving, cfg.step)
        or _capsules_hit([contact, stroke], static + occluders, cfg.step)
    )


def path_json(capsules) -> str:
    return json.dumps([c.to_dict() for c in capsules], indent=2)


def census(scene: Scene, cloud: LabeledCloud, action: str, cfg: OracleConfig = OracleConfig()) -> np.ndarray:
    """Oracle labels of every target-part point (``-1`` elsewhere)."""
    labels = np.full(len(cloud), -1, dtype=np.int8)
    for i in cloud.target_indices:
        labels[i] = evaluate(scene, cloud, int(i), action, cfg).label
    return labels
