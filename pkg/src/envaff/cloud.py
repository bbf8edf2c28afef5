"""Labeled surface point clouds: sampling, furthest point downsampling, PLY I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorruptData
from .geometry import primitive_area, sample_surface
from .scene import Scene, Solid

DEFAULT_N_OUT = 2048


@dataclass(frozen=True, eq=False)
class LabeledCloud:
    """Points with outward normals, segment labels and handle flags.

    ``seg`` holds the part index (>= 0) for target parts, ``-1`` for the target
    body and ``-(2 + j)`` for occluder ``j``.
    """

    points: np.ndarray
    normals: np.ndarray
    seg: np.ndarray
    handle: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        nrm = np.ascontiguousarray(self.normals, dtype=np.float64)
        seg = np.ascontiguousarray(self.seg, dtype=np.int32)
        handle = np.ascontiguousarray(self.handle, dtype=bool)
        n = len(pts)
        if pts.shape != (n, 3) or nrm.shape != (n, 3) or seg.shape != (n,) or handle.shape != (n,):
            raise ValueError("inconsistent cloud array shapes")
        for name, arr in (("points", pts), ("normals", nrm), ("seg", seg), ("handle", handle)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.points)

    @property
    def target_indices(self) -> np.ndarray:
        return np.flatnonzero(self.seg >= 0)

    @property
    def handle_indices(self) -> np.ndarray:
        return np.flatnonzero(self.handle & (self.seg >= 0))

    def subset(self, idx) -> "LabeledCloud":
        idx = np.asarray(idx)
        return LabeledCloud(self.points[idx], self.normals[idx], self.seg[idx], self.handle[idx])

    def concat(self, other: "LabeledCloud") -> "LabeledCloud":
        return LabeledCloud(
            np.concatenate([self.points, other.points]),
            np.concatenate([self.normals, other.normals]),
            np.concatenate([self.seg, other.seg]),
            np.concatenate([self.handle, other.handle]),
        )

    def equals(self, other: "LabeledCloud") -> bool:
        return (
            np.array_equal(self.points, other.points)
            and np.array_equal(self.normals, other.normals)
            and np.array_equal(self.seg, other.seg)
            and np.array_equal(self.handle, other.handle)
        )

    def validate(self, n_parts: int | None = None) -> list:
        problems = []
        norms = np.linalg.norm(self.normals, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            problems.append("normals not unit length")
        if n_parts is not None and np.any(self.seg >= n_parts):
            problems.append("segment label refers to a missing part")
        if np.any(self.handle & (self.seg < 0)):
            problems.append("handle flag on a non-part point")
        if not np.all(np.isfinite(self.points)):
            problems.append("non-finite coordinates")
        return problems


def furthest_point_sampling(points: np.ndarray, k: int, start: int = 0) -> np.ndarray:
    """Greedy max-min subset of ``k`` indices, beginning at ``start``.

    Ties go to the lowest index (``argmax`` semantics), so output is deterministic.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    x, y, z = (np.ascontiguousarray(points[:, i]) for i in range(3))
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = cur = start
    dist = np.full(n, np.inf)
    sq, tmp = np.empty(n), np.empty(n)
    # preallocated buffers: this loop dominates cloud sampling time
    for i in range(1, k):
        np.subtract(x, x[cur], out=sq)
        np.multiply(sq, sq, out=sq)
        np.subtract(y, y[cur], out=tmp)
        np.multiply(tmp, tmp, out=tmp)
        sq += tmp
        np.subtract(z, z[cur], out=tmp)
        np.multiply(tmp, tmp, out=tmp)
        sq += tmp
        np.minimum(dist, sq, out=dist)
        cur = int(np.argmax(dist))
        chosen[i] = cur
    return chosen


def _sample_solids(solids: Sequence[Solid], n: int, rng: np.random.Generator):
    areas = np.array([primitive_area(s.prim) for s in solids])
    counts = rng.multinomial(n, areas / areas.sum()) if n > 0 else np.zeros(len(solids), int)
    pts, nrm, seg, hdl = [], [], [], []
    for s, c in zip(solids, counts):
        p, q = sample_surface(s.prim, int(c), rng, s.skip_faces)
        pts.append(p)
        nrm.append(q)
        seg.append(np.full(int(c), s.seg, np.int32))
        hdl.append(np.full(int(c), s.handle))
    return LabeledCloud(np.concatenate(pts), np.concatenate(nrm), np.concatenate(seg), np.concatenate(hdl))


def sample_solids(solids: Sequence[Solid], n_raw: int, n_out: int, rng: np.random.Generator) -> LabeledCloud:
    """Area-weighted raw samples over ``solids`` downsampled to ``n_out`` by FPS."""
    if not n_raw >= n_out >= 1:
        raise ValueError("need n_raw >= n_out >= 1")
    raw = _sample_solids(solids, n_raw, rng)
    if n_out == n_raw:
        return raw
    return raw.subset(furthest_point_sampling(raw.points, n_out))


def sample_cloud(
    scene: Scene, n_raw: int = 4 * DEFAULT_N_OUT, n_out: int = DEFAULT_N_OUT, seed: int = 0, handle_points: int = 8
) -> LabeledCloud:
    """Surface cloud of every solid in ``scene`` with exactly ``n_out`` points.

    Each handle receives ``handle_points`` points of its own (spread by FPS over
    dense handle samples); the remaining budget is shared area-wise by the other
    solids.  With ``handle_points=0`` the sampling is purely area-weighted.
    """
    rng = np.random.default_rng(seed)
    solids = scene.solids()
    handles = [s for s in solids if s.handle] if handle_points > 0 else []
    others = [s for s in solids if s not in handles] if handles else solids
    reserved = handle_points * len(handles)
    if not n_raw >= n_out > reserved:
        raise ValueError(f"need n_raw >= n_out > {reserved} (reserved handle points)")
    main = sample_solids(others, n_raw - reserved, n_out - reserved, rng)
    parts = [main]
    for h in handles:
        dense = _sample_solids([h], 8 * handle_points, rng)
        parts.append(dense.subset(furthest_point_sampling(dense.points, handle_points)))
    out = parts[0]
    for p in parts[1:]:
        out = out.concat(p)
    return out


def occluder_cloud(scene: Scene, occluder: int, n: int, seed: int) -> LabeledCloud:
    """``n`` FPS-spread surface points of a single occluder of ``scene``."""
    rng = np.random.default_rng(seed)
    solid = [s for s in scene.solids() if s.seg == -(2 + occluder)]
    return sample_solids(solid, 8 * n, n, rng)


def extend_cloud(cloud: LabeledCloud, scene: Scene, occluder: int, n: int, seed: int) -> LabeledCloud:
    """Append points of a newly added occluder, leaving existing points untouched."""
    return cloud.concat(occluder_cloud(scene, occluder, n, seed))


def mirror_cloud(cloud: LabeledCloud) -> LabeledCloud:
    M = np.array([1.0, -1.0, 1.0])
    return LabeledCloud(cloud.points * M, cloud.normals * M, cloud.seg, cloud.handle)


# ---------------------------------------------------------------------------
# PLY

_PLY_FIELDS = [
    ("x", "<f8", "double"),
    ("y", "<f8", "double"),
    ("z", "<f8", "double"),
    ("nx", "<f8", "double"),
    ("ny", "<f8", "double"),
    ("nz", "<f8", "double"),
    ("seg", "<i4", "int"),
    ("handle", "u1", "uchar"),
]
_COLOR_FIELDS = [("red", "u1", "uchar"), ("green", "u1", "uchar"), ("blue", "u1", "uchar")]
_PLY_TYPES = {"double": "<f8", "float": "<f4", "int": "<i4", "uchar": "u1", "uint": "<u4"}


def ply_bytes(cloud: LabeledCloud, colors: np.ndarray | None = None) -> bytes:
    fields = _PLY_FIELDS + (_COLOR_FIELDS if colors is not None else [])
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(cloud)}"]
    header += [f"property {ply} {name}" for name, _, ply in fields]
    header.append("end_header")
    arr = np.zeros(len(cloud), dtype=[(n, d) for n, d, _ in fields])
    for i, ax in enumerate("xyz"):
        arr[ax] = cloud.points[:, i]
        arr["n" + ax] = cloud.normals[:, i]
    arr["seg"] = cloud.seg
    arr["handle"] = cloud.handle
    if colors is not None:
        for i, c in enumerate(("red", "green", "blue")):
            arr[c] = colors[:, i]
    return ("\n".join(header) + "\n").encode("ascii") + arr.tobytes()


def write_ply(path, cloud: LabeledCloud, colors: np.ndarray | None = None) -> None:
    Path(path).write_bytes(ply_bytes(cloud, colors))


def parse_ply(data: bytes):
    """Return ``(cloud, colors_or_None)`` from binary PLY bytes."""
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise CorruptData("not a binary PLY file")
    lines = data[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in lines:
        raise CorruptData("only binary_little_endian PLY is supported")
    n, props = None, []
    for line in lines:
        tok = line.split()
        if tok[:2] == ["element", "vertex"]:
            n = int(tok[2])
        elif tok and tok[0] == "property":
            if tok[1] not in _PLY_TYPES:
                raise CorruptData(f"unsupported PLY property type {tok[1]}")
            props.append((tok[2], _PLY_TYPES[tok[1]]))
    if n is None:
        raise CorruptData("PLY has no vertex element")
    dtype = np.dtype(props)
    body = data[end + len(b"end_header\n"):]
    if len(body) != n * dtype.itemsize:
        raise CorruptData(f"PLY body has {len(body)} bytes, expected {n * dtype.itemsize}")
    arr = np.frombuffer(body, dtype=dtype)
    try:
        pts = np.stack([arr["x"], arr["y"], arr["z"]], axis=1)
        nrm = np.stack([arr["nx"], arr["ny"], arr["nz"]], axis=1)
        cloud = LabeledCloud(pts, nrm, arr["seg"], arr["handle"].astype(bool))
    except (ValueError, KeyError) as exc:
        raise CorruptData(f"PLY missing required vertex properties: {exc}") from exc
    colors = None
    if "red" in arr.dtype.names:
        colors = np.stack([arr["red"], arr["green"], arr["blue"]], axis=1)
    return cloud, colors


def read_ply(path) -> LabeledCloud:
    return parse_ply(Path(path).read_bytes())[0]


def is_on_surface(cloud: LabeledCloud, solids: Sequence[Solid], tol: float = 1e-6) -> np.ndarray:
    """Number of solids each point lies on (|sdf| < tol)."""
    counts = np.zeros(len(cloud), dtype=int)
    for s in solids:
        counts += np.abs(s.prim.sdf(cloud.points)) < tol
    return counts
