"""Evaluation protocol: per-record metrics, proposal accuracy and heatmap export."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .. import oracle
from ..cloud import LabeledCloud, ply_bytes
from ..errors import EmptyScene, IoFailure, NoPositives
from ..oracle import OracleConfig
from ..scene import Scene
from .metrics import average_precision, confusion, f_score

# scorer(scene, cloud, action, indices) -> one score per index
Scorer = Callable[[Scene, LabeledCloud, str, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProposalPolicy:
    threshold: float = 0.5
    proposals_per_scene: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("proposal threshold must lie in (0, 1)")
        if self.proposals_per_scene < 1:
            raise ValueError("need at least one proposal per scene")


@dataclass
class MetricsReport:
    action: str
    split: str
    seed: int
    f_score: float
    average_precision: Optional[float]
    sma: Optional[float] = None
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def model_scorer(model) -> Scorer:
    """Scores from a fitted ``AffordanceModel`` (the action is fixed by the model)."""
    return lambda scene, cloud, action, idx: model.score_points(cloud, scene.robot, idx)


def oracle_scorer(cfg: OracleConfig = OracleConfig()) -> Scorer:
    def score(scene, cloud, action, idx):
        return np.array([oracle.evaluate(scene, cloud, int(i), action, cfg).label for i in idx], dtype=float)

    return score


def random_scorer(seed: int = 0) -> Scorer:
    rng = np.random.default_rng(seed)
    return lambda scene, cloud, action, idx: rng.random(len(idx))


def sample_manipulation_accuracy(
    scorer: Scorer,
    scenes: Sequence,
    action: str,
    policy: ProposalPolicy = ProposalPolicy(),
    cfg: OracleConfig = OracleConfig(),
) -> dict:
    """Fraction of proposed interactions the oracle accepts.

    ``scenes`` holds ``(scene, cloud)`` pairs.  Every target point is scored;
    proposals are drawn uniformly (with replacement) from points scoring at least
    the threshold, or the single best point when none do.
    """
    rng = np.random.default_rng(policy.seed)
    proposals = successes = 0
    for scene, cloud in scenes:
        idx = cloud.target_indices
        if len(idx) == 0:
            raise EmptyScene(f"scene {scene.id} has no target-part points")
        scores = np.asarray(scorer(scene, cloud, action, idx), dtype=float)
        pool = idx[scores >= policy.threshold]
        if len(pool) == 0:
            pool = idx[[int(np.argmax(scores))]]
        picks = pool[rng.integers(len(pool), size=policy.proposals_per_scene)]
        for p in picks:
            successes += oracle.evaluate(scene, cloud, int(p), action, cfg).label
        proposals += len(picks)
    if proposals == 0:
        raise EmptyScene("no scenes to propose interactions in")
    return {"sma": successes / proposals, "proposals": proposals, "successes": successes}


def census_rate(scenes: Sequence, action: str, cfg: OracleConfig = OracleConfig()) -> float:
    """Success rate of a uniformly random target point, averaged per scene.

    This is the expected sma of a proposer that ignores its scores.
    """
    rates = []
    for scene, cloud in scenes:
        labels = oracle.census(scene, cloud, action, cfg)
        labels = labels[labels >= 0]
        if len(labels) == 0:
            raise EmptyScene(f"scene {scene.id} has no target-part points")
        rates.append(labels.mean())
    return float(np.mean(rates))


def evaluate_split(model, dataset, action: str, seed: int = 0, threshold: float = 0.5,
                   policy: Optional[ProposalPolicy] = None, sma_scenes: Optional[int] = None) -> MetricsReport:
    """Metrics of ``model`` on the held-out records of one (action, split) cell."""
    records = dataset.probes(action)
    preds = model.predict_proba([dataset.query(r) for r in records])
    labels = np.array([r.label for r in records])
    try:
        ap = average_precision(preds, labels)
    except NoPositives:
        ap = None
    counts = confusion(preds, labels, threshold)
    counts["records"] = len(records)
    report = MetricsReport(action, dataset.split, seed, f_score(preds, labels, threshold), ap, counts=counts)
    if policy is not None:
        ids = dataset.manifest["scene_ids"][:sma_scenes]
        pairs = [(dataset.scenes[i], dataset.clouds[i]) for i in ids]
        res = sample_manipulation_accuracy(model_scorer(model), pairs, action, policy)
        report.sma = res["sma"]
        report.counts.update(proposals=res["proposals"], successes=res["successes"])
    return report


def triplet_ordering(model, dataset, action: Optional[str] = None) -> float:
    """Share of triplets with ``d(anchor, positive) < d(anchor, negative)`` in scene-feature space."""
    trips = dataset.triplets(action)
    if not trips:
        raise EmptyScene("no triplets to order")
    feats = model.transform([dataset.query(r) for t in trips for r in (t.anchor, t.positive, t.negative)])
    a, p, n = feats[0::3], feats[1::3], feats[2::3]
    d_pos = np.sum((a - p) ** 2, axis=1)
    d_neg = np.sum((a - n) ** 2, axis=1)
    return float(np.mean(d_pos < d_neg))


def evaluate_protocol(models: dict, test_sets: dict, seed: int = 0, threshold: float = 0.5,
                      policy: Optional[ProposalPolicy] = None, sma_scenes: Optional[int] = None) -> list:
    """One report per (action, split); ``models`` maps action to a fitted model."""
    reports = []
    for action in sorted(models):
        for split in sorted(test_sets):
            reports.append(evaluate_split(models[action], test_sets[split], action, seed, threshold, policy, sma_scenes))
    return reports


# ---------------------------------------------------------------------------
# heatmaps

GRAY = (128, 128, 128)


def score_colors(scores: np.ndarray) -> np.ndarray:
    """Blue (0) through white (0.5) to red (1)."""
    s = np.clip(np.asarray(scores, float), 0.0, 1.0)[:, None]
    blue, white, red = np.array([0, 0, 255.0]), np.array([255.0, 255, 255]), np.array([255.0, 0, 0])
    low = blue + (white - blue) * (2 * s)
    high = white + (red - white) * (2 * s - 1)
    return np.rint(np.where(s < 0.5, low, high)).astype(np.uint8)


def heatmap_files(model, scene: Scene, cloud: LabeledCloud, action: str, robot=None):
    """PLY bytes (scores as vertex colors) and CSV text of ``index,score``."""
    robot = scene.robot if robot is None else np.asarray(robot, float)
    idx = cloud.target_indices
    scores = model.score_points(cloud, robot, idx)
    colors = np.tile(np.array(GRAY, np.uint8), (len(cloud), 1))
    colors[idx] = score_colors(scores)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "score"])
    for i, s in zip(idx, scores):
        w.writerow([int(i), repr(float(s))])
    return ply_bytes(cloud, colors), buf.getvalue()


def export_heatmap(model, scene: Scene, cloud: LabeledCloud, action: str, path, robot=None) -> tuple:
    """Write ``<path>.ply`` and ``<path>.csv``; returns both paths."""
    ply, text = heatmap_files(model, scene, cloud, action, robot)
    base = Path(path)
    ply_path, csv_path = base.with_suffix(".ply"), base.with_suffix(".csv")
    try:
        ply_path.write_bytes(ply)
        csv_path.write_text(text)
    except OSError as exc:
        raise IoFailure(f"cannot write heatmap to {base}: {exc}") from exc
    return ply_path, csv_path
