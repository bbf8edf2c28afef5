"""Primitive solids, rigid transforms, distance queries and swept-capsule tests.

Points are plain ``numpy`` arrays of shape ``(3,)`` or ``(N, 3)`` in meters.
All shapes are immutable; operations return new values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

EPS = 1e-9


def vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    return v


def unit(x) -> np.ndarray:
    v = vec3(x)
    n = np.linalg.norm(v)
    if n < EPS:
        raise ValueError("cannot normalize a zero vector")
    # leaving near-unit input untouched keeps serialization round trips exact
    return v if abs(n - 1.0) <= 4e-16 else v / n


def cross(a, b) -> np.ndarray:
    """Right-handed cross product; broadcasts over leading dimensions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2]
    b1, b2, b3 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1], axis=-1)


def axis_angle(axis, angle: float) -> np.ndarray:
    """Rotation matrix about ``axis`` by ``angle`` radians (Rodrigues)."""
    k = unit(axis)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    return (
        R.shape == (3, 3)
        and np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0)
        and abs(np.linalg.det(R) - 1.0) < tol
    )


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float)
        if not is_rotation(R, 1e-8):
            raise ValueError("rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", vec3(t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    def apply(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p @ self.rotation.T + self.translation

    def apply_vector(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.rotation.T

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d) -> "RigidTransform":
        return cls(np.array(d["rotation"]), np.array(d["translation"]))


def apply_transform(t: RigidTransform, p) -> np.ndarray:
    return t.apply(p)


# ---------------------------------------------------------------------------
# primitives


@dataclass(frozen=True, eq=False)
class OrientedBox:
    center: np.ndarray
    half_extents: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    kind = "box"

    def __post_init__(self):
        object.__setattr__(self, "center", vec3(self.center))
        object.__setattr__(self, "half_extents", vec3(self.half_extents))
        R = np.array(self.rotation, dtype=float)
        if not is_rotation(R, 1e-8):
            raise ValueError("box rotation must be a proper rotation")
        object.__setattr__(self, "rotation", R)
        if np.any(self.half_extents <= 0):
            raise ValueError("box half-extents must be strictly positive")

    def to_local(self, p) -> np.ndarray:
        return (np.asarray(p, dtype=float) - self.center) @ self.rotation

    def sdf(self, p) -> np.ndarray:
        q = np.abs(self.to_local(p)) - self.half_extents
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside

    def transformed(self, t: RigidTransform) -> "OrientedBox":
        return OrientedBox(t.apply(self.center), self.half_extents, t.rotation @ self.rotation)

    @property
    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.half_extents))

    @property
    def centroid(self) -> np.ndarray:
        return self.center

    def faces(self):
        """Yield ``(axis, sign, area)`` for the six faces."""
        h = self.half_extents
        for ax in range(3):
            o1, o2 = [i for i in range(3) if i != ax]
            area = 4.0 * h[o1] * h[o2]
            for sign in (1.0, -1.0):
                yield ax, sign, area

    def sample_face(self, ax: int, sign: float, u: np.ndarray):
        """Map unit-square samples ``u`` (M, 2) onto face ``(ax, sign)``."""
        h = self.half_extents
        o1, o2 = [i for i in range(3) if i != ax]
        local = np.zeros((len(u), 3))
        local[:, ax] = sign * h[ax]
        local[:, o1] = (2.0 * u[:, 0] - 1.0) * h[o1]
        local[:, o2] = (2.0 * u[:, 1] - 1.0) * h[o2]
        n_local = np.zeros(3)
        n_local[ax] = sign
        pts = local @ self.rotation.T + self.center
        nrm = np.tile(self.rotation @ n_local, (len(u), 1))
        return pts, nrm

    def face_normal(self, ax: int, sign: float) -> np.ndarray:
        n_local = np.zeros(3)
        n_local[ax] = sign
        return self.rotation @ n_local

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
        return (signs * self.half_extents) @ self.rotation.T + self.center

    def to_dict(self) -> dict:
        return {
            "kind": "box",
            "center": self.center.tolist(),
            "half_extents": self.half_extents.tolist(),
            "rotation": self.rotation.tolist(),
        }


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    kind = "sphere"

    def __post_init__(self):
        object.__setattr__(self, "center", vec3(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0:
            raise ValueError("sphere radius must be strictly positive")

    def sdf(self, p) -> np.ndarray:
        return np.linalg.norm(np.asarray(p, dtype=float) - self.center, axis=-1) - self.radius

    def transformed(self, t: RigidTransform) -> "Sphere":
        return Sphere(t.apply(self.center), self.radius)

    @property
    def bounding_radius(self) -> float:
        return self.radius

    @property
    def centroid(self) -> np.ndarray:
        return self.center

    def to_dict(self) -> dict:
        return {"kind": "sphere", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Cylinder:
    """Solid cylinder from the cap centered at ``base`` to ``base + 2*half_length*axis``."""

    base: np.ndarray
    axis: np.ndarray
    half_length: float
    radius: float

    kind = "cylinder"

    def __post_init__(self):
        object.__setattr__(self, "base", vec3(self.base))
        object.__setattr__(self, "axis", unit(self.axis))
        object.__setattr__(self, "half_length", float(self.half_length))
        object.__setattr__(self, "radius", float(self.radius))
        if self.half_length <= 0 or self.radius <= 0:
            raise ValueError("cylinder half-length and radius must be strictly positive")

    @property
    def mid(self) -> np.ndarray:
        return self.base + self.half_length * self.axis

    def sdf(self, p) -> np.ndarray:
        # exact: radial and axial excess combined like a 2-D box
        d = np.asarray(p, dtype=float) - self.mid
        t = d @ self.axis
        radial = np.linalg.norm(d - t[..., None] * self.axis, axis=-1)
        q = np.stack([radial - self.radius, np.abs(t) - self.half_length], axis=-1)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside

    def transformed(self, t: RigidTransform) -> "Cylinder":
        return Cylinder(t.apply(self.base), t.apply_vector(self.axis), self.half_length, self.radius)

    @property
    def bounding_radius(self) -> float:
        return math.hypot(self.half_length, self.radius)

    @property
    def centroid(self) -> np.ndarray:
        return self.mid

    def frame(self) -> np.ndarray:
        """Orthonormal columns (e1, e2, axis)."""
        a = self.axis
        helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(a, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(a, e1)
        return np.stack([e1, e2, a], axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": "cylinder",
            "base": self.base.tolist(),
            "axis": self.axis.tolist(),
            "half_length": self.half_length,
            "radius": self.radius,
        }


Primitive = Union[OrientedBox, Sphere, Cylinder]


def primitive_from_dict(d) -> Primitive:
    kind = d["kind"]
    if kind == "box":
        return OrientedBox(np.array(d["center"]), np.array(d["half_extents"]), np.array(d["rotation"]))
    if kind == "sphere":
        return Sphere(np.array(d["center"]), d["radius"])
    if kind == "cylinder":
        return Cylinder(np.array(d["base"]), np.array(d["axis"]), d["half_length"], d["radius"])
    raise ValueError(f"unknown primitive kind {kind!r}")


def mirror_primitive(prim: Primitive, M: np.ndarray) -> Primitive:
    """Reflect ``prim`` by the diagonal reflection ``M``; result stays a proper solid."""
    if isinstance(prim, OrientedBox):
        return OrientedBox(M @ prim.center, prim.half_extents, M @ prim.rotation @ M)
    if isinstance(prim, Sphere):
        return Sphere(M @ prim.center, prim.radius)
    return Cylinder(M @ prim.base, M @ prim.axis, prim.half_length, prim.radius)


@dataclass(frozen=True, eq=False)
class Capsule:
    a: np.ndarray
    b: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "a", vec3(self.a))
        object.__setattr__(self, "b", vec3(self.b))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0:
            raise ValueError("capsule radius must be strictly positive")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))

    def samples(self, step: float) -> np.ndarray:
        """Points along ``ab`` at spacing <= ``step``, both endpoints included."""
        if step <= 0:
            raise ValueError("step must be positive")
        n = max(1, int(math.ceil(self.length / step)))
        t = np.linspace(0.0, 1.0, n + 1)
        return self.a + t[:, None] * (self.b - self.a)

    def to_dict(self) -> dict:
        return {"a": self.a.tolist(), "b": self.b.tolist(), "radius": self.radius}

    @classmethod
    def from_dict(cls, d) -> "Capsule":
        return cls(np.array(d["a"]), np.array(d["b"]), d["radius"])


# ---------------------------------------------------------------------------
# queries


def segment_point_distance(a, b, p) -> float:
    a, b, p = vec3(a), vec3(b), vec3(p)
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom < EPS * EPS else min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return float(np.linalg.norm(a + t * ab - p))


def point_primitive_distance(p, prim: Primitive):
    """Signed distance from ``p`` to ``prim`` (negative inside); vectorized over rows."""
    d = prim.sdf(p)
    return float(d) if np.ndim(d) == 0 else d


def capsule_hits_primitive(c: Capsule, prim: Primitive, step: float) -> bool:
    samples = c.samples(step)
    # cheap reject on bounding spheres
    mid = 0.5 * (c.a + c.b)
    reach = 0.5 * c.length + c.radius + prim.bounding_radius
    if np.linalg.norm(mid - prim.centroid) > reach + EPS:
        return False
    return bool(np.any(prim.sdf(samples) < c.radius))


def _surface_grid(prim: Primitive, step: float) -> np.ndarray:
    """Deterministic surface points at spacing about ``step``."""
    if isinstance(prim, OrientedBox):
        out = []
        for ax, sign, _ in prim.faces():
            o1, o2 = [i for i in range(3) if i != ax]
            n1 = max(2, int(math.ceil(2 * prim.half_extents[o1] / step)) + 1)
            n2 = max(2, int(math.ceil(2 * prim.half_extents[o2] / step)) + 1)
            g1, g2 = np.meshgrid(np.linspace(0, 1, n1), np.linspace(0, 1, n2), indexing="ij")
            pts, _ = prim.sample_face(ax, sign, np.stack([g1.ravel(), g2.ravel()], axis=1))
            out.append(pts)
        return np.concatenate(out)
    if isinstance(prim, Sphere):
        n = max(8, int(math.ceil(4 * math.pi * prim.radius**2 / step**2)))
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)
        theta = math.pi * (1 + 5**0.5) * i
        d = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
        return prim.center + prim.radius * d
    F = prim.frame()
    n_ang = max(8, int(math.ceil(2 * math.pi * prim.radius / step)))
    n_ax = max(2, int(math.ceil(2 * prim.half_length / step)) + 1)
    ang = np.linspace(0, 2 * math.pi, n_ang, endpoint=False)
    ts = np.linspace(-prim.half_length, prim.half_length, n_ax)
    A, T = np.meshgrid(ang, ts, indexing="ij")
    side = np.stack([prim.radius * np.cos(A).ravel(), prim.radius * np.sin(A).ravel(), T.ravel()], 1)
    rings = []
    for rr in np.linspace(0, prim.radius, max(2, int(math.ceil(prim.radius / step)) + 1)):
        for z in (-prim.half_length, prim.half_length):
            rings.append(np.stack([rr * np.cos(ang), rr * np.sin(ang), np.full(n_ang, z)], 1))
    local = np.concatenate([side] + rings)
    return local @ F.T + prim.mid


def _box_box_overlap(a: OrientedBox, b: OrientedBox) -> bool:
    # separating axis theorem over 15 candidate axes
    axes = [a.rotation[:, i] for i in range(3)] + [b.rotation[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            c = np.cross(a.rotation[:, i], b.rotation[:, j])
            if np.linalg.norm(c) > 1e-9:
                axes.append(c / np.linalg.norm(c))
    d = b.center - a.center
    for L in axes:
        ra = np.sum(a.half_extents * np.abs(L @ a.rotation))
        rb = np.sum(b.half_extents * np.abs(L @ b.rotation))
        if abs(d @ L) > ra + rb - EPS:
            return False
    return True


def _enclosing_box(prim: Primitive) -> OrientedBox:
    if isinstance(prim, Cylinder):
        return OrientedBox(prim.mid, (prim.radius, prim.radius, prim.half_length), prim.frame())
    return prim


def primitives_overlap(a: Primitive, b: Primitive, step: float = 0.01) -> bool:
    """Interior overlap test.

    Exact for box/box (separating axes) and any pair involving a sphere; pairs with
    a cylinder fall back to surface sampling at ``step`` in both directions.
    """
    if np.linalg.norm(a.centroid - b.centroid) > a.bounding_radius + b.bounding_radius:
        return False
    if isinstance(a, OrientedBox) and isinstance(b, OrientedBox):
        return _box_box_overlap(a, b)
    if isinstance(a, Sphere):
        return bool(b.sdf(a.center) < a.radius - EPS)
    if isinstance(b, Sphere):
        return bool(a.sdf(b.center) < b.radius - EPS)
    # separated enclosing boxes prove separation without any sampling
    if not _box_box_overlap(_enclosing_box(a), _enclosing_box(b)):
        return False
    if np.any(b.sdf(_surface_grid(a, step)) < -EPS):
        return True
    if np.any(a.sdf(_surface_grid(b, step)) < -EPS):
        return True
    for c in (a, b):
        if isinstance(c, Cylinder):
            other = b if c is a else a
            axis_pts = Capsule(c.base, c.base + 2 * c.half_length * c.axis, 1.0).samples(step)
            if np.any(other.sdf(axis_pts) < -EPS):
                return True
    return False


def primitive_area(prim: Primitive) -> float:
    if isinstance(prim, OrientedBox):
        h = prim.half_extents
        return 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2])
    if isinstance(prim, Sphere):
        return 4.0 * math.pi * prim.radius**2
    return 2.0 * math.pi * prim.radius * (2.0 * prim.half_length) + 2.0 * math.pi * prim.radius**2


def sample_surface(prim: Primitive, n: int, rng: np.random.Generator, skip_faces=()):
    """Area-uniform surface samples with analytic outward normals.

    ``skip_faces`` lists ``(axis, sign)`` box faces to leave out (contact faces).
    """
    if n <= 0:
        return np.zeros((0, 3)), np.zeros((0, 3))
    if isinstance(prim, OrientedBox):
        faces = [(ax, s, area) for ax, s, area in prim.faces() if (ax, s) not in skip_faces]
        areas = np.array([f[2] for f in faces])
        which = rng.choice(len(faces), size=n, p=areas / areas.sum())
        u = rng.random((n, 2))
        pts = np.empty((n, 3))
        nrm = np.empty((n, 3))
        for fi, (ax, s, _) in enumerate(faces):
            m = which == fi
            if m.any():
                pts[m], nrm[m] = prim.sample_face(ax, s, u[m])
        return pts, nrm
    if isinstance(prim, Sphere):
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return prim.center + prim.radius * d, d
    F = prim.frame()
    r, h = prim.radius, prim.half_length
    side_area = 2 * math.pi * r * 2 * h
    cap_area = math.pi * r * r
    which = rng.choice(3, size=n, p=np.array([side_area, cap_area, cap_area]) / (side_area + 2 * cap_area))
    ang = rng.random(n) * 2 * math.pi
    local = np.empty((n, 3))
    nl = np.zeros((n, 3))
    side = which == 0
    local[side] = np.stack([r * np.cos(ang[side]), r * np.sin(ang[side]), rng.uniform(-h, h, side.sum())], 1)
    nl[side] = np.stack([np.cos(ang[side]), np.sin(ang[side]), np.zeros(side.sum())], 1)
    for cap, z in ((1, h), (2, -h)):
        m = which == cap
        rr = r * np.sqrt(rng.random(m.sum()))
        local[m] = np.stack([rr * np.cos(ang[m]), rr * np.sin(ang[m]), np.full(m.sum(), z)], 1)
        nl[m, 2] = np.sign(z)
    return local @ F.T + prim.mid, nl @ F.T
