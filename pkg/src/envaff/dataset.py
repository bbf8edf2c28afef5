"""Interaction collection, contrastive triplets, test splits and on-disk datasets.

Directory layout::

    manifest.json       split metadata, counts, seeds, format version
    records.bin         b"EAFFREC" + version byte + u32 count, then per record
                        a u32 payload length followed by the packed payload
    scenes/<id>.json    one scene per id
    clouds/<id>.ply     one labeled cloud per id

Record payload (little endian, see ``_RECORD``): record id u32, scene ref u32,
cloud ref u32, robot 3 x f64, point index u32, action u8, label u8, failure
code u8, role u8, triplet index i32 (-1 when not part of a triplet).
"""

from __future__ import annotations

import json
import logging
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import oracle
from .cloud import LabeledCloud, extend_cloud, parse_ply, ply_bytes, sample_cloud
from .errors import AugmentFailure, CorruptData, PlacementFailure, QuotaFailure, VersionMismatch
from .geometry import primitive_area
from .learn.features import Query
from .oracle import ACTIONS, FAILURE_REASONS, PULL, PUSH, OracleConfig
from .scene import FAMILY_POOLS, Scene, SceneSpec, augment_positive, generate_scene, sample_negative_point

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
RECORDS_MAGIC = b"EAFFREC"
_RECORD = struct.Struct("<III3dIBBBBi")

TRAIN, TEST_SEEN, TEST_NOVEL, VALIDATION = "train", "test-seen", "test-novel", "validation"
SPLITS = (TRAIN, TEST_SEEN, TEST_NOVEL, VALIDATION)
# scene ids are partitioned by split so ids can never collide across splits
ID_BASE = {TRAIN: 0, TEST_SEEN: 2_000_000, TEST_NOVEL: 3_000_000, VALIDATION: 4_000_000}
# augmented positives of a triplet split
POSITIVE_BASE = {TRAIN: 1_000_000, VALIDATION: 5_000_000}

ANCHOR, POSITIVE, NEGATIVE, PROBE = 0, 1, 2, 3
_ACTION_CODE = {PUSH: 0, PULL: 1}
_FAILURE_CODE = {None: 0, **{r: i + 1 for i, r in enumerate(FAILURE_REASONS)}}

DEFAULT_QUOTAS = {PUSH: (90, 90), PULL: (30, 250)}


@dataclass(frozen=True)
class InteractionRecord:
    record_id: int
    scene_ref: int
    cloud_ref: int
    robot: tuple
    point_index: int
    action: str
    label: int
    failure_reason: Optional[str] = None
    role: int = PROBE
    triplet: int = -1

    def pack(self) -> bytes:
        return _RECORD.pack(
            self.record_id, self.scene_ref, self.cloud_ref, *self.robot, self.point_index,
            _ACTION_CODE[self.action], self.label, _FAILURE_CODE[self.failure_reason], self.role, self.triplet,
        )

    @classmethod
    def unpack(cls, payload: bytes) -> "InteractionRecord":
        if len(payload) != _RECORD.size:
            raise CorruptData(f"record payload of {len(payload)} bytes, expected {_RECORD.size}")
        rid, sref, cref, x, y, z, pidx, act, label, fail, role, trip = _RECORD.unpack(payload)
        actions = {v: k for k, v in _ACTION_CODE.items()}
        failures = {v: k for k, v in _FAILURE_CODE.items()}
        if act not in actions or fail not in failures or label not in (0, 1) or role > PROBE:
            raise CorruptData(f"record {rid} has an out-of-range code")
        return cls(rid, sref, cref, (x, y, z), pidx, actions[act], label, failures[fail], role, trip)


@dataclass(frozen=True)
class Triplet:
    anchor: InteractionRecord
    positive: InteractionRecord
    negative: InteractionRecord

    def problems(self) -> list:
        a, p, n = self.anchor, self.positive, self.negative
        out = []
        if p.point_index != a.point_index:
            out.append("positive point differs from anchor point")
        if p.label != a.label:
            out.append("positive label differs from anchor label")
        if n.point_index == a.point_index:
            out.append("negative point equals anchor point")
        if n.scene_ref != a.scene_ref:
            out.append("negative comes from another scene")
        if not (a.robot == p.robot == n.robot):
            out.append("robot differs within triplet")
        if not (a.action == p.action == n.action):
            out.append("action differs within triplet")
        return out


@dataclass(frozen=True)
class CollectSpec:
    """Triplet collection settings (train or validation split); quotas map action to (successes, failures)."""

    n_scenes: int = 200
    quotas: dict = field(default_factory=lambda: dict(DEFAULT_QUOTAS))
    handle_fraction: float = 0.5
    seed: int = 0
    n_out: int = 2048
    sample_budget: int = 100_000
    augment_retries: int = 200
    oracle: OracleConfig = OracleConfig()
    split: str = TRAIN


@dataclass(frozen=True)
class TestSpec:
    n_scenes: int = 100
    occluders: tuple = (2, 4)
    records_per_scene: int = 8
    handle_fraction: float = 0.5
    seed: int = 0
    n_out: int = 2048
    actions: tuple = ACTIONS
    oracle: OracleConfig = OracleConfig()


@dataclass
class Dataset:
    manifest: dict
    records: list
    scenes: dict
    clouds: dict

    @property
    def split(self) -> str:
        return self.manifest["split"]

    def triplets(self, action: Optional[str] = None) -> list:
        groups: dict = {}
        for r in self.records:
            if r.triplet >= 0:
                groups.setdefault(r.triplet, {})[r.role] = r
        out = []
        for t in sorted(groups):
            g = groups[t]
            trip = Triplet(g[ANCHOR], g[POSITIVE], g[NEGATIVE])
            if action is None or trip.anchor.action == action:
                out.append(trip)
        return out

    def query(self, r: InteractionRecord) -> Query:
        return Query(self.clouds[r.cloud_ref], np.array(r.robot), r.point_index)

    def training_data(self, action: str):
        """``(X, y)`` for ``AffordanceModel.fit``: query triples and their (n, 3) labels."""
        trips = self.triplets(action)
        X = [(self.query(t.anchor), self.query(t.positive), self.query(t.negative)) for t in trips]
        y = np.array([[t.anchor.label, t.positive.label, t.negative.label] for t in trips], dtype=float)
        return X, y

    def probes(self, action: str) -> list:
        return [r for r in self.records if r.action == action and r.role in (PROBE, ANCHOR)]

    def verify_labels(self, cfg: OracleConfig = OracleConfig()) -> int:
        """Number of records whose stored label disagrees with the oracle."""
        bad = 0
        for r in self.records:
            v = oracle.evaluate(self.scenes[r.scene_ref], self.clouds[r.cloud_ref], r.point_index, r.action, cfg)
            bad += v.label != r.label or v.failure_reason != r.failure_reason
        return bad


# ---------------------------------------------------------------------------
# collection


def _sub_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def make_scene(split: str, i: int, seed: int, n_occluders: int, pool) -> Scene:
    split_code = SPLITS.index(split)
    for attempt in range(100):
        spec = SceneSpec(
            num_occluders=n_occluders, occluder_pool=pool, seed=_sub_seed(seed, split_code, i, attempt),
            scene_id=ID_BASE[split] + i,
        )
        try:
            return generate_scene(spec)
        except PlacementFailure:
            continue
    raise PlacementFailure(f"scene {i} of split {split} could not be placed")


def _draw_point(cloud: LabeledCloud, action: str, handle_fraction: float, rng) -> int:
    handles = cloud.handle_indices
    if action == PULL and len(handles):
        if rng.random() < handle_fraction:
            return int(handles[rng.integers(len(handles))])
        pool = np.setdiff1d(cloud.target_indices, handles)
    else:
        pool = cloud.target_indices
    return int(pool[rng.integers(len(pool))])


def _extra_points(scene: Scene, occluder: int, n_out: int) -> int:
    # match the density of the base cloud
    total = sum(primitive_area(s.prim) for s in scene.solids() if s.seg != -(2 + occluder))
    return max(8, int(round(n_out * primitive_area(scene.occluder_world(occluder)) / total)))


def _occluder_histogram(scenes) -> dict:
    return {str(k): v for k, v in sorted(Counter(len(s.occluders) for s in scenes).items())}


def collect(spec: CollectSpec = CollectSpec()) -> Dataset:
    """Rejection-sample labeled interactions until every (action, class) quota is met.

    Each accepted anchor gets a positive (same point, one extra label-preserving
    peripheral occluder) and a negative (same scene, another point).
    """
    if spec.split not in POSITIVE_BASE:
        raise ValueError(f"triplets are collected for {' or '.join(POSITIVE_BASE)}, not {spec.split!r}")
    for action, (succ, fail) in spec.quotas.items():
        if action not in ACTIONS or succ < 0 or fail < 0:
            raise ValueError(f"bad quota entry {action!r}: {(succ, fail)}")
    pool = FAMILY_POOLS["train"]
    scenes = [make_scene(spec.split, i, spec.seed, 1, pool) for i in range(spec.n_scenes)]
    clouds = [sample_cloud(s, 4 * spec.n_out, spec.n_out, seed=s.rng_seed) for s in scenes]
    all_scenes = {s.id: s for s in scenes}
    all_clouds = {s.id: c for s, c in zip(scenes, clouds)}
    records: list = []
    n_trip = 0
    split_code = SPLITS.index(spec.split)
    rng = np.random.default_rng(_sub_seed(spec.seed, 99, split_code))
    for action in ACTIONS:
        if action not in spec.quotas:
            continue
        need = {1: spec.quotas[action][0], 0: spec.quotas[action][1]}
        attempts = 0
        while need[0] or need[1]:
            if attempts >= spec.sample_budget:
                starved = [(action, "success" if k else "failure") for k in (1, 0) if need[k]]
                raise QuotaFailure(
                    f"sample budget of {spec.sample_budget} exhausted; still missing {need[1]} successes "
                    f"and {need[0]} failures for {action}",
                    starved=starved,
                )
            attempts += 1
            si = int(rng.integers(len(scenes)))
            scene, cloud = scenes[si], clouds[si]
            point = _draw_point(cloud, action, spec.handle_fraction, rng)
            verdict = oracle.evaluate(scene, cloud, point, action, spec.oracle)
            if not need[verdict.label]:
                continue
            aug_seed = _sub_seed(spec.seed, 7, split_code, attempts, _ACTION_CODE[action])
            pos_id = POSITIVE_BASE[spec.split] + n_trip
            try:
                pos_scene = augment_positive(
                    scene, lambda s: oracle.evaluate(s, cloud, point, action, spec.oracle).label,
                    pos_id, aug_seed, pool, spec.augment_retries,
                )
            except AugmentFailure:
                continue
            occ = len(pos_scene.occluders) - 1
            pos_cloud = extend_cloud(cloud, pos_scene, occ, _extra_points(pos_scene, occ, spec.n_out), aug_seed)
            pos_verdict = oracle.evaluate(pos_scene, pos_cloud, point, action, spec.oracle)
            neg_point = sample_negative_point(cloud.seg, cloud.points, point, aug_seed)
            neg_verdict = oracle.evaluate(scene, cloud, neg_point, action, spec.oracle)
            all_scenes[pos_id] = pos_scene
            all_clouds[pos_id] = pos_cloud
            robot = tuple(float(v) for v in scene.robot)
            base = len(records)
            records += [
                InteractionRecord(base, scene.id, scene.id, robot, point, action, verdict.label,
                                  verdict.failure_reason, ANCHOR, n_trip),
                InteractionRecord(base + 1, pos_id, pos_id, robot, point, action, pos_verdict.label,
                                  pos_verdict.failure_reason, POSITIVE, n_trip),
                InteractionRecord(base + 2, scene.id, scene.id, robot, neg_point, action, neg_verdict.label,
                                  neg_verdict.failure_reason, NEGATIVE, n_trip),
            ]
            need[verdict.label] -= 1
            n_trip += 1
        log.info("%s quotas filled after %d samples", action, attempts)
    manifest = _manifest(spec.split, spec.seed, records, scenes, {
        "n_scenes": spec.n_scenes, "quotas": {k: list(v) for k, v in spec.quotas.items()},
        "handle_fraction": spec.handle_fraction, "n_out": spec.n_out,
    })
    return Dataset(manifest, records, all_scenes, all_clouds)


def _manifest(split: str, seed: int, records, base_scenes, config: dict) -> dict:
    counts: dict = {}
    for a in config["quotas"]:
        anchors = [r for r in records if r.action == a and r.role in (ANCHOR, PROBE)]
        counts[a] = {"success": sum(r.label for r in anchors), "failure": sum(1 - r.label for r in anchors)}
    return {
        "format_version": FORMAT_VERSION,
        "split": split,
        "seeds": {"master": seed},
        "counts": counts,
        "n_records": len(records),
        "n_triplets": len({r.triplet for r in records if r.triplet >= 0}),
        "occluder_counts": _occluder_histogram(base_scenes),
        "scene_ids": sorted(s.id for s in base_scenes),
        "config": config,
    }


def build_test_sets(spec: TestSpec = TestSpec()) -> dict:
    """Multi-occluder evaluation splits: seen families and held-out families."""
    lo, hi = spec.occluders
    if not 1 <= lo <= hi:
        raise ValueError("occluder range must satisfy 1 <= lo <= hi")
    out = {}
    for split, pool in ((TEST_SEEN, FAMILY_POOLS["train"]), (TEST_NOVEL, FAMILY_POOLS["novel"])):
        rng = np.random.default_rng(_sub_seed(spec.seed, SPLITS.index(split), 5))
        scenes, clouds, records = [], {}, []
        for i in range(spec.n_scenes):
            s = make_scene(split, i, spec.seed, int(rng.integers(lo, hi + 1)), pool)
            c = sample_cloud(s, 4 * spec.n_out, spec.n_out, seed=s.rng_seed)
            scenes.append(s)
            clouds[s.id] = c
            robot = tuple(float(v) for v in s.robot)
            for action in spec.actions:
                for _ in range(spec.records_per_scene):
                    p = _draw_point(c, action, spec.handle_fraction, rng)
                    v = oracle.evaluate(s, c, p, action, spec.oracle)
                    records.append(InteractionRecord(len(records), s.id, s.id, robot, p, action, v.label,
                                                     v.failure_reason, PROBE))
        config = {"n_scenes": spec.n_scenes, "occluders": list(spec.occluders),
                  "records_per_scene": spec.records_per_scene, "handle_fraction": spec.handle_fraction,
                  "n_out": spec.n_out, "quotas": {a: None for a in spec.actions}}
        out[split] = Dataset(_manifest(split, spec.seed, records, scenes, config), records,
                             {s.id: s for s in scenes}, clouds)
    return out


# ---------------------------------------------------------------------------
# serialization


def records_bytes(records) -> bytes:
    parts = [RECORDS_MAGIC, bytes([FORMAT_VERSION]), struct.pack("<I", len(records))]
    for r in records:
        payload = r.pack()
        parts += [struct.pack("<I", len(payload)), payload]
    return b"".join(parts)


def parse_records(data: bytes) -> list:
    head = len(RECORDS_MAGIC)
    if len(data) < head + 5 or not data.startswith(RECORDS_MAGIC):
        raise CorruptData("records file is truncated or has a bad magic")
    if data[head] != FORMAT_VERSION:
        raise VersionMismatch(f"records format version {data[head]}, expected {FORMAT_VERSION}")
    (n,) = struct.unpack_from("<I", data, head + 1)
    off = head + 5
    out = []
    for _ in range(n):
        if off + 4 > len(data):
            raise CorruptData("records file truncated")
        (size,) = struct.unpack_from("<I", data, off)
        off += 4
        if off + size > len(data):
            raise CorruptData("records file truncated")
        out.append(InteractionRecord.unpack(data[off : off + size]))
        off += size
    if off != len(data):
        raise CorruptData(f"{len(data) - off} trailing bytes after the last record")
    return out


def save(ds: Dataset, path) -> None:
    root = Path(path)
    (root / "scenes").mkdir(parents=True, exist_ok=True)
    (root / "clouds").mkdir(parents=True, exist_ok=True)
    (root / "manifest.json").write_text(json.dumps(ds.manifest, indent=2, sort_keys=True) + "\n")
    (root / "records.bin").write_bytes(records_bytes(ds.records))
    for sid in sorted(ds.scenes):
        (root / "scenes" / f"{sid}.json").write_text(json.dumps(ds.scenes[sid].to_dict(), sort_keys=True) + "\n")
    for cid in sorted(ds.clouds):
        (root / "clouds" / f"{cid}.ply").write_bytes(ply_bytes(ds.clouds[cid]))


def _read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise CorruptData(f"missing {path.name}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptData(f"{path.name} is not valid JSON: {exc}") from exc


def load(path) -> Dataset:
    """Read a dataset directory and check every structural invariant."""
    root = Path(path)
    manifest = _read_json(root / "manifest.json")
    if manifest.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"dataset format version {manifest.get('format_version')}, expected {FORMAT_VERSION}")
    try:
        records = parse_records((root / "records.bin").read_bytes())
    except FileNotFoundError as exc:
        raise CorruptData("missing records.bin") from exc
    scenes, clouds = {}, {}
    for ref in sorted({r.scene_ref for r in records} | set(manifest.get("scene_ids", []))):
        try:
            scenes[ref] = Scene.from_dict(_read_json(root / "scenes" / f"{ref}.json"))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptData(f"scene {ref} is malformed: {exc}") from exc
    for ref in sorted({r.cloud_ref for r in records} | set(manifest.get("scene_ids", []))):
        try:
            clouds[ref] = parse_ply((root / "clouds" / f"{ref}.ply").read_bytes())[0]
        except FileNotFoundError as exc:
            raise CorruptData(f"missing cloud {ref}") from exc
    ds = Dataset(manifest, records, scenes, clouds)
    problems = check_dataset(ds)
    if problems:
        raise CorruptData("; ".join(problems[:5]))
    return ds


def check_dataset(ds: Dataset) -> list:
    """Structural problems (empty when consistent); labels are not re-run through the oracle."""
    problems = []
    if [r.record_id for r in ds.records] != list(range(len(ds.records))):
        problems.append("record ids are not consecutive")
    for r in ds.records:
        cloud = ds.clouds.get(r.cloud_ref)
        if cloud is None or r.scene_ref not in ds.scenes:
            problems.append(f"record {r.record_id} refers to a missing scene or cloud")
        elif not 0 <= r.point_index < len(cloud) or cloud.seg[r.point_index] < 0:
            problems.append(f"record {r.record_id} does not point at a target-part point")
    if problems:
        return problems
    fresh = _manifest(ds.split, ds.manifest["seeds"]["master"], ds.records,
                      [ds.scenes[i] for i in ds.manifest["scene_ids"]], ds.manifest["config"])
    for key in ("counts", "n_records", "n_triplets", "occluder_counts"):
        if fresh[key] != ds.manifest.get(key):
            problems.append(f"manifest {key} does not match the stored records")
    for t in ds.triplets():
        problems += t.problems()
    return problems
