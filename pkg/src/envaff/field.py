"""Robot-target conditioned occlusion field and significant-point selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cloud import LabeledCloud
from .geometry import cross

DEFAULT_K = 256


def field_value(p, robot, target) -> np.ndarray:
    """``(p - robot) x (p - target)``; vectorized over leading dims of ``p``.

    The magnitude equals twice the area of the triangle (p, robot, target), so it
    vanishes at both anchors and along the line through them.
    """
    p = np.asarray(p, dtype=float)
    return cross(p - np.asarray(robot, float), p - np.asarray(target, float))


@dataclass(frozen=True, eq=False)
class SignificantSet:
    """Selected points sorted by ascending field magnitude (ties by index)."""

    indices: np.ndarray
    values: np.ndarray
    magnitudes: np.ndarray
    k: int

    def __len__(self):
        return len(self.indices)

    def samples(self):
        return [FieldSample(int(i), v, float(m)) for i, v, m in zip(self.indices, self.values, self.magnitudes)]


@dataclass(frozen=True, eq=False)
class FieldSample:
    point_index: int
    value: np.ndarray
    magnitude: float


def candidate_mask(cloud: LabeledCloud, part: int | None, include_target_points: bool) -> np.ndarray:
    """Occluder and body points, plus target-part points other than ``part``.

    With ``include_target_points`` every point is a candidate; with ``part=None``
    all target-part points are left out.
    """
    if include_target_points:
        return np.ones(len(cloud), dtype=bool)
    if part is None:
        return cloud.seg < 0
    return cloud.seg != part


def select_significant(
    cloud: LabeledCloud,
    robot,
    target,
    k: int = DEFAULT_K,
    include_target_points: bool = False,
    part: int | None = None,
) -> SignificantSet:
    if k < 1:
        raise ValueError("k must be >= 1")
    cand = np.flatnonzero(candidate_mask(cloud, part, include_target_points))
    values = field_value(cloud.points[cand], robot, target)
    mags = np.linalg.norm(values, axis=1)
    # primary key magnitude, ties by ascending point index
    order = np.lexsort((cand, mags))[:k]
    return SignificantSet(cand[order], values[order], mags[order], k)


def significant_for_point(cloud: LabeledCloud, robot, point_index: int, k: int = DEFAULT_K, include_target_points=False):
    """Selection conditioned on cloud point ``point_index`` and its own part."""
    part = int(cloud.seg[point_index])
    return select_significant(
        cloud, robot, cloud.points[point_index], k, include_target_points, part if part >= 0 else None
    )


def export_field_csv(path, cloud: LabeledCloud, robot, target, selected: SignificantSet | None = None) -> None:
    """Write ``index,F1,F2,F3,magnitude,selected`` for every cloud point."""
    values = field_value(cloud.points, robot, target)
    mags = np.linalg.norm(values, axis=1)
    chosen = np.zeros(len(cloud), dtype=bool)
    if selected is not None:
        chosen[selected.indices] = True
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "F1", "F2", "F3", "magnitude", "selected"])
        for i in range(len(cloud)):
            row = [float(values[i, 0]), float(values[i, 1]), float(values[i, 2]), float(mags[i])]
            w.writerow([i, *map(repr, row), int(chosen[i])])
