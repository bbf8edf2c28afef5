"""Procedural articulated-target scenes with floor occluders and a robot base.

Frame convention: z is up, the floor is ``z = 0``, the target cabinet is centered
on the origin and its front faces point toward ``+x``.  The robot base and all
occluders live on the floor in front of the cabinet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AugmentFailure, OutOfRange, PlacementFailure
from .geometry import (
    Cylinder,
    OrientedBox,
    Primitive,
    RigidTransform,
    Sphere,
    axis_angle,
    mirror_primitive,
    primitive_from_dict,
    primitives_overlap,
    rot_z,
    unit,
    vec3,
)

SCENE_SCHEMA = "envaff.scene/1"

BODY = -1
PRISMATIC = "prismatic"
REVOLUTE = "revolute"

PANEL = 0.02
GAP = 0.002
DRAWER_TRAVEL = 0.25
HANDLE_PROTRUSION = 0.02


def occluder_label(j: int) -> int:
    """Segment label of occluder ``j`` (parts are >= 0, the body is -1)."""
    return -(2 + j)


def occluder_index(label: int) -> int:
    return -label - 2


@dataclass(frozen=True, eq=False)
class Joint:
    kind: str
    axis: np.ndarray
    anchor: np.ndarray
    lo: float
    hi: float
    state: float = 0.0

    def __post_init__(self):
        if self.kind not in (PRISMATIC, REVOLUTE):
            raise ValueError(f"unknown joint kind {self.kind!r}")
        object.__setattr__(self, "axis", unit(self.axis))
        object.__setattr__(self, "anchor", vec3(self.anchor))
        if not self.lo <= self.hi:
            raise ValueError("joint range must satisfy lo <= hi")
        if not self.lo - 1e-12 <= self.state <= self.hi + 1e-12:
            raise OutOfRange(f"joint state {self.state} outside [{self.lo}, {self.hi}]")

    def placement(self, state: Optional[float] = None) -> RigidTransform:
        q = self.state if state is None else state
        if self.kind == PRISMATIC:
            return RigidTransform(np.eye(3), self.axis * q)
        R = axis_angle(self.axis, q)
        return RigidTransform(R, self.anchor - R @ self.anchor)

    def point_velocity(self, p: np.ndarray) -> np.ndarray:
        """Displacement of ``p`` per unit joint motion."""
        if self.kind == PRISMATIC:
            return self.axis.copy()
        return np.cross(self.axis, p - self.anchor)

    def to_dict(self):
        return {
            "kind": self.kind,
            "axis": self.axis.tolist(),
            "anchor": self.anchor.tolist(),
            "range": [self.lo, self.hi],
            "state": self.state,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], np.array(d["axis"]), np.array(d["anchor"]), d["range"][0], d["range"][1], d["state"])


@dataclass(frozen=True, eq=False)
class Part:
    """A movable part; ``shape`` and ``handle`` are given at joint state 0."""

    shape: OrientedBox
    joint: Joint
    handle: Optional[OrientedBox] = None
    # (axis, sign) of the handle face glued to the part; never sampled
    handle_contact: Optional[tuple] = None
    name: str = "part"

    def posed(self, state: Optional[float] = None):
        T = self.joint.placement(state)
        shape = self.shape.transformed(T)
        handle = None if self.handle is None else self.handle.transformed(T)
        return shape, handle

    def to_dict(self):
        return {
            "name": self.name,
            "shape": self.shape.to_dict(),
            "joint": self.joint.to_dict(),
            "handle": None if self.handle is None else self.handle.to_dict(),
            "handle_contact": None if self.handle_contact is None else list(self.handle_contact),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            primitive_from_dict(d["shape"]),
            Joint.from_dict(d["joint"]),
            None if d["handle"] is None else primitive_from_dict(d["handle"]),
            None if d["handle_contact"] is None else tuple(d["handle_contact"]),
            d.get("name", "part"),
        )


@dataclass(frozen=True, eq=False)
class ArticulatedTarget:
    body: tuple
    parts: tuple
    base: RigidTransform = field(default_factory=RigidTransform.identity)

    def to_dict(self):
        return {
            "body": [b.to_dict() for b in self.body],
            "parts": [p.to_dict() for p in self.parts],
            "base": self.base.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tuple(primitive_from_dict(b) for b in d["body"]),
            tuple(Part.from_dict(p) for p in d["parts"]),
            RigidTransform.from_dict(d["base"]),
        )


@dataclass(frozen=True)
class Solid:
    """A world-frame solid together with its cloud labels."""

    prim: Primitive
    seg: int
    handle: bool = False
    skip_faces: tuple = ()


@dataclass(frozen=True, eq=False)
class Scene:
    id: int
    target: ArticulatedTarget
    occluders: tuple  # of (Primitive in local frame, RigidTransform)
    robot: np.ndarray
    rng_seed: int = 0
    occluder_families: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "robot", vec3(self.robot))
        object.__setattr__(self, "occluders", tuple(self.occluders))

    def occluder_world(self, j: int) -> Primitive:
        prim, T = self.occluders[j]
        return prim.transformed(T)

    def occluder_prims(self) -> list:
        return [self.occluder_world(j) for j in range(len(self.occluders))]

    def part_world(self, i: int, state: Optional[float] = None):
        shape, handle = self.target.parts[i].posed(state)
        base = self.target.base
        return shape.transformed(base), None if handle is None else handle.transformed(base)

    def body_world(self) -> list:
        return [b.transformed(self.target.base) for b in self.target.body]

    def joint_world(self, i: int) -> Joint:
        j = self.target.parts[i].joint
        b = self.target.base
        return replace(j, axis=b.apply_vector(j.axis), anchor=b.apply(j.anchor))

    def solids(self) -> list:
        out = [Solid(p, BODY) for p in self.body_world()]
        for i, part in enumerate(self.target.parts):
            shape, handle = self.part_world(i)
            out.append(Solid(shape, i))
            if handle is not None:
                out.append(Solid(handle, i, True, (tuple(part.handle_contact),) if part.handle_contact else ()))
        out.extend(Solid(p, occluder_label(j)) for j, p in enumerate(self.occluder_prims()))
        return out

    def with_occluder(self, prim: Primitive, T: RigidTransform, new_id: int, family: str = "") -> "Scene":
        return replace(
            self,
            id=new_id,
            occluders=self.occluders + ((prim, T),),
            occluder_families=self.occluder_families + (family,),
        )

    def to_dict(self):
        return {
            "schema": SCENE_SCHEMA,
            "id": self.id,
            "rng_seed": self.rng_seed,
            "robot": self.robot.tolist(),
            "target": self.target.to_dict(),
            "occluders": [
                {"primitive": p.to_dict(), "placement": T.to_dict(), "family": fam}
                for (p, T), fam in zip(self.occluders, self._families())
            ],
        }

    def _families(self):
        fams = list(self.occluder_families)
        return fams + [""] * (len(self.occluders) - len(fams))

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != SCENE_SCHEMA:
            raise ValueError(f"unsupported scene schema {d.get('schema')!r}")
        occ = tuple((primitive_from_dict(o["primitive"]), RigidTransform.from_dict(o["placement"])) for o in d["occluders"])
        fams = tuple(o.get("family", "") for o in d["occluders"])
        return cls(d["id"], ArticulatedTarget.from_dict(d["target"]), occ, np.array(d["robot"]), d["rng_seed"], fams)


# ---------------------------------------------------------------------------
# occluder families


@dataclass(frozen=True)
class OccluderFamily:
    """Shape-parameter family; ``ranges`` maps parameter name to ``(lo, hi)``.

    Boxes use full sizes ``sx, sy, sz``; cylinders ``radius, height``; spheres ``radius``.
    """

    name: str
    kind: str
    ranges: tuple

    def range_dict(self) -> dict:
        return dict(self.ranges)

    def draw(self, rng: np.random.Generator) -> Primitive:
        r = self.range_dict()
        if self.kind == "box":
            size = np.array([rng.uniform(*r["sx"]), rng.uniform(*r["sy"]), rng.uniform(*r["sz"])])
            return OrientedBox(np.zeros(3), size / 2)
        if self.kind == "cylinder":
            rad, h = rng.uniform(*r["radius"]), rng.uniform(*r["height"])
            return Cylinder(np.array([0.0, 0.0, -h / 2]), np.array([0.0, 0.0, 1.0]), h / 2, rad)
        if self.kind == "sphere":
            return Sphere(np.zeros(3), rng.uniform(*r["radius"]))
        raise ValueError(f"unknown occluder kind {self.kind!r}")

    def disjoint_from(self, other: "OccluderFamily") -> bool:
        """True when no parameter vector can belong to both families."""
        if self.kind != other.kind:
            return True
        a, b = self.range_dict(), other.range_dict()
        return any(a[k][1] < b[k][0] or b[k][1] < a[k][0] for k in a)


def _fam(name, kind, **ranges):
    return OccluderFamily(name, kind, tuple(sorted((k, tuple(v)) for k, v in ranges.items())))


TRAIN_FAMILIES = (
    _fam("box", "box", sx=(0.05, 0.40), sy=(0.05, 0.40), sz=(0.05, 0.40)),
    _fam("cylinder", "cylinder", radius=(0.025, 0.20), height=(0.05, 0.40)),
    _fam("sphere", "sphere", radius=(0.025, 0.20)),
)

NOVEL_FAMILIES = (
    _fam("tall_thin_cylinder", "cylinder", radius=(0.02, 0.05), height=(0.45, 0.75)),
    _fam("wide_low_box", "box", sx=(0.42, 0.60), sy=(0.42, 0.60), sz=(0.08, 0.25)),
    _fam("pillar_box", "box", sx=(0.05, 0.15), sy=(0.05, 0.15), sz=(0.45, 0.75)),
)

FAMILY_POOLS = {"train": TRAIN_FAMILIES, "novel": NOVEL_FAMILIES}


def resting_height(prim: Primitive) -> float:
    """Lift that puts a locally centered, upright primitive on the floor."""
    if isinstance(prim, OrientedBox):
        return float(prim.half_extents[2])
    if isinstance(prim, Sphere):
        return prim.radius
    return prim.half_length


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class SceneSpec:
    num_occluders: int = 1
    occluder_pool: tuple = TRAIN_FAMILIES
    # placement region in front of the cabinet front face: depth band and lateral band (m)
    region_depth: tuple = (0.05, 0.70)
    region_width: tuple = (-0.70, 0.70)
    robot_radius: tuple = (0.6, 1.0)
    robot_arc: float = math.radians(60.0)
    seed: int = 0
    scene_id: int = 0
    max_retries: int = 1000
    clearance: float = 0.01
    robot_clearance: float = 0.10


def _box(lo, hi) -> OrientedBox:
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return OrientedBox((lo + hi) / 2, (hi - lo) / 2)


def generate_target(rng: np.random.Generator) -> ArticulatedTarget:
    """Cabinet with 1-3 drawers stacked above 0-2 doors."""
    W = rng.uniform(0.6, 1.0)
    H = rng.uniform(0.6, 0.9)
    D = rng.uniform(0.4, 0.5)
    n_drawers = int(rng.integers(1, 4))
    n_doors = int(rng.integers(0, 3))
    t, g = PANEL, GAP
    xf, xb = D / 2, -D / 2
    yi0, yi1 = -W / 2 + t + g, W / 2 - t - g
    body = [
        _box([xb, -W / 2, 0], [xf, -W / 2 + t, H]),
        _box([xb, W / 2 - t, 0], [xf, W / 2, H]),
        _box([xb, yi0, 0], [xf, yi1, t]),
        _box([xb, yi0, H - t], [xf, yi1, H]),
        _box([xb, yi0, t + g], [xb + t, yi1, H - t - g]),
    ]
    z_lo, z_hi = t + g, H - t - g
    if n_doors:
        split = z_lo + (z_hi - z_lo) * rng.uniform(0.4, 0.6)
        door_bay = (z_lo, split - t / 2 - g)
        drawer_zone = (split + t / 2 + g, z_hi)
        body.append(_box([xb + t + g, yi0, split - t / 2], [xf, yi1, split + t / 2]))
    else:
        door_bay = None
        drawer_zone = (z_lo, z_hi)
    # split the drawer zone into equal bays separated by dividers
    edges = np.linspace(drawer_zone[0], drawer_zone[1], n_drawers + 1)
    bays = []
    for k in range(n_drawers):
        a = edges[k] + (t / 2 + g if k > 0 else 0.0)
        b = edges[k + 1] - (t / 2 + g if k < n_drawers - 1 else 0.0)
        bays.append((a, b))
        if k > 0:
            body.append(_box([xb + t + g, yi0, edges[k] - t / 2], [xf, yi1, edges[k] + t / 2]))

    parts = []
    for k, (a, b) in enumerate(bays):
        shape = _box([xb + t + 2 * g, yi0 + g, a + g], [xf, yi1 - g, b - g])
        zc, yc = (a + b) / 2, (yi0 + yi1) / 2
        handle = OrientedBox(
            [xf + HANDLE_PROTRUSION / 2, yc, zc], [HANDLE_PROTRUSION / 2, 0.02, 0.01]
        )
        state = 0.0 if rng.random() < 0.3 else float(rng.uniform(0.0, DRAWER_TRAVEL))
        joint = Joint(PRISMATIC, [1.0, 0.0, 0.0], [xf, yc, zc], 0.0, DRAWER_TRAVEL, state)
        parts.append(Part(shape, joint, handle, (0, -1.0), f"drawer{k}"))
    if n_doors:
        a, b = door_bay
        spans = [(yi0, yi1)] if n_doors == 1 else [(yi0, (yi0 + yi1) / 2 - g), ((yi0 + yi1) / 2 + g, yi1)]
        for k, (ya, yb) in enumerate(spans):
            x0 = xf + g
            shape = _box([x0, ya + g, a + g], [x0 + t, yb - g, b - g])
            if n_doors == 1:
                right = bool(rng.random() < 0.5)
            else:
                right = k == 1
            # hinge on the outer edge; positive angle swings the free edge toward +x
            if right:
                anchor, axis = [x0, yb - g, 0.0], [0.0, 0.0, 1.0]
            else:
                anchor, axis = [x0, ya + g, 0.0], [0.0, 0.0, -1.0]
            zc, yc = (a + b) / 2, (ya + yb) / 2
            handle = OrientedBox([x0 + t + HANDLE_PROTRUSION / 2, yc, zc], [HANDLE_PROTRUSION / 2, 0.01, 0.02])
            state = 0.0 if rng.random() < 0.3 else float(rng.uniform(0.0, math.pi / 2))
            joint = Joint(REVOLUTE, axis, anchor, 0.0, math.pi / 2, state)
            parts.append(Part(shape, joint, handle, (0, -1.0), f"door{k}"))
    return ArticulatedTarget(tuple(body), tuple(parts))


def set_joint_state(target: ArticulatedTarget, part: int, state: float) -> ArticulatedTarget:
    p = target.parts[part]
    if not p.joint.lo - 1e-12 <= state <= p.joint.hi + 1e-12:
        raise OutOfRange(f"state {state} outside [{p.joint.lo}, {p.joint.hi}] for part {part}")
    parts = list(target.parts)
    parts[part] = replace(p, joint=replace(p.joint, state=float(state)))
    return replace(target, parts=tuple(parts))


def _placement_ok(prim, T, scene: Scene, spec_clearance, robot_clearance) -> bool:
    world = prim.transformed(T)
    if world.sdf(scene.robot) < robot_clearance:
        return False
    grown = _grown(world, spec_clearance)
    for s in scene.solids():
        if primitives_overlap(grown, s.prim):
            return False
    return True


def _grown(prim: Primitive, margin: float) -> Primitive:
    if margin <= 0:
        return prim
    if isinstance(prim, OrientedBox):
        return OrientedBox(prim.center, prim.half_extents + margin, prim.rotation)
    if isinstance(prim, Sphere):
        return Sphere(prim.center, prim.radius + margin)
    return Cylinder(prim.base - margin * prim.axis, prim.axis, prim.half_length + margin, prim.radius + margin)


def _front_x(target: ArticulatedTarget) -> float:
    return max(float(b.center[0] + b.half_extents[0]) for b in target.body)


def _sample_robot(target_scene: Scene, spec: SceneSpec, rng) -> np.ndarray:
    for _ in range(spec.max_retries):
        rho = rng.uniform(*spec.robot_radius)
        phi = rng.uniform(-spec.robot_arc, spec.robot_arc)
        robot = np.array([rho * math.cos(phi), rho * math.sin(phi), 0.0])
        if all(s.prim.sdf(robot) > spec.robot_clearance for s in target_scene.solids()):
            return robot
    raise PlacementFailure("could not place the robot base outside the target")


def generate_scene(spec: SceneSpec) -> Scene:
    if spec.num_occluders < 0:
        raise ValueError("num_occluders must be >= 0")
    if spec.num_occluders and not spec.occluder_pool:
        raise ValueError("occluder pool must be non-empty")
    rng = np.random.default_rng(spec.seed)
    target = generate_target(rng)
    scene = Scene(spec.scene_id, target, (), np.zeros(3), spec.seed)
    scene = replace(scene, robot=_sample_robot(scene, spec, rng))
    xf = _front_x(target)
    for _ in range(spec.num_occluders):
        for _attempt in range(spec.max_retries):
            fam = spec.occluder_pool[int(rng.integers(len(spec.occluder_pool)))]
            prim = fam.draw(rng)
            yaw = rng.uniform(0, 2 * math.pi)
            pos = [xf + rng.uniform(*spec.region_depth), rng.uniform(*spec.region_width), resting_height(prim)]
            T = RigidTransform(rot_z(yaw), pos)
            if _placement_ok(prim, T, scene, spec.clearance, spec.robot_clearance):
                scene = scene.with_occluder(prim, T, scene.id, fam.name)
                break
        else:
            raise PlacementFailure(
                f"could not place occluder {len(scene.occluders)} within {spec.max_retries} retries"
            )
    return scene


def validate_scene(scene: Scene, clearance: float = 0.0) -> list:
    """Return a list of invariant violations (empty when valid)."""
    problems = []
    occ = scene.occluder_prims()
    for part in scene.target.parts:
        j = part.joint
        if not j.lo - 1e-12 <= j.state <= j.hi + 1e-12:
            problems.append(f"{part.name}: joint state out of range")
        shape, _ = part.posed(j.lo)
        for b in scene.target.body:
            if primitives_overlap(shape, b):
                problems.append(f"{part.name}: interpenetrates body at rest")
    target_prims = [s.prim for s in scene.solids() if s.seg >= BODY]
    for a in range(len(occ)):
        for b in range(a + 1, len(occ)):
            if primitives_overlap(occ[a], occ[b]):
                problems.append(f"occluders {a} and {b} interpenetrate")
        for tp in target_prims:
            if primitives_overlap(occ[a], tp):
                problems.append(f"occluder {a} interpenetrates the target")
    for s in scene.solids():
        if s.prim.sdf(scene.robot) <= 0:
            problems.append("robot base inside a solid")
            break
    return problems


# ---------------------------------------------------------------------------
# contrastive helpers


def augment_positive(
    scene: Scene,
    label_fn: Callable[[Scene], int],
    new_id: int,
    seed: int,
    pool: Sequence[OccluderFamily] = TRAIN_FAMILIES,
    max_retries: int = 200,
    region_depth=(0.05, 0.70),
    region_width=(-0.70, 0.70),
    edge_band: float = 0.25,
    clearance: float = 0.01,
    robot_clearance: float = 0.10,
) -> Scene:
    """Add one peripheral occluder that leaves ``label_fn`` unchanged.

    Candidates come from the outer band of the placement region on either lateral
    side; each accepted candidate is re-labelled and kept only if the label matches.
    """
    rng = np.random.default_rng(seed)
    base_label = label_fn(scene)
    xf = _front_x(scene.target)
    lo_w, hi_w = region_width
    for _ in range(max_retries):
        fam = pool[int(rng.integers(len(pool)))]
        prim = fam.draw(rng)
        side = 1.0 if rng.random() < 0.5 else -1.0
        y = side * rng.uniform(max(abs(lo_w), abs(hi_w)) - edge_band, max(abs(lo_w), abs(hi_w)))
        x = xf + rng.uniform(*region_depth)
        T = RigidTransform(rot_z(rng.uniform(0, 2 * math.pi)), [x, y, resting_height(prim)])
        if not _placement_ok(prim, T, scene, clearance, robot_clearance):
            continue
        candidate = scene.with_occluder(prim, T, new_id, fam.name)
        if label_fn(candidate) == base_label:
            return candidate
    raise AugmentFailure(f"no label-preserving peripheral occluder within {max_retries} retries")


def sample_negative_point(seg: np.ndarray, points: np.ndarray, anchor_index: int, seed: int, d_min: float = 0.05) -> int:
    """Uniformly pick another target-part point at least ``d_min`` from the anchor."""
    seg = np.asarray(seg)
    idx = np.flatnonzero(seg >= 0)
    idx = idx[idx != anchor_index]
    if len(idx) == 0:
        raise ValueError("need at least two target points")
    rng = np.random.default_rng(seed)
    far = idx[np.linalg.norm(points[idx] - points[anchor_index], axis=1) >= d_min]
    pool = far if len(far) else idx
    return int(pool[rng.integers(len(pool))])


# ---------------------------------------------------------------------------
# symmetry


MIRROR_Y = np.diag([1.0, -1.0, 1.0])


def mirror_scene(scene: Scene) -> Scene:
    """Reflect the whole scene across the ``y = 0`` plane."""
    M = MIRROR_Y
    if not np.allclose(scene.target.base.rotation, np.eye(3)) or abs(scene.target.base.translation[1]) > 0:
        raise ValueError("mirroring expects a target whose base frame is aligned with the world")
    parts = []
    for p in scene.target.parts:
        j = p.joint
        # axes of rotation are pseudo-vectors: they pick up the reflection determinant
        axis = -M @ j.axis if j.kind == REVOLUTE else M @ j.axis
        joint = Joint(j.kind, axis, M @ j.anchor, j.lo, j.hi, j.state)
        handle = None if p.handle is None else mirror_primitive(p.handle, M)
        parts.append(Part(mirror_primitive(p.shape, M), joint, handle, p.handle_contact, p.name))
    target = ArticulatedTarget(tuple(mirror_primitive(b, M) for b in scene.target.body), tuple(parts), scene.target.base)
    occ = []
    for prim, T in scene.occluders:
        world = mirror_primitive(prim.transformed(T), M)
        occ.append((world, RigidTransform.identity()))
    return Scene(scene.id, target, tuple(occ), M @ scene.robot, scene.rng_seed, scene.occluder_families)
