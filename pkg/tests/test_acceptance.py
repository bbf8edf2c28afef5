"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are collected in ``RESULTS`` and repeated in the terminal summary.
Criteria 6 to 8 share one run of the three-seed protocol (about 17 minutes).
"""

import hashlib
import time
from pathlib import Path

import numpy as np
import pytest

import gradcases
from envaff import oracle
from envaff.cloud import sample_cloud
from envaff.dataset import VALIDATION, CollectSpec, collect
from envaff.field import field_value
from envaff.harness import config
from envaff.harness.cli import main
from envaff.harness.metrics import average_precision, f_score
from envaff.harness.protocol import run_protocol
from envaff.scene import SceneSpec, generate_scene
from references import brute_average_precision, brute_f_score

ROOT = Path(__file__).parents[1]
RESULTS = {}


def record(n: int, name: str, ok: bool, detail: str):
    line = f"criterion {n} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS[n] = line
    print(line)
    return ok


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def kahan_area(p, r, t):
    """Triangle area from side lengths, in the cancellation-free arrangement."""
    sides = np.sort(np.stack([np.linalg.norm(r - t, axis=-1), np.linalg.norm(p - t, axis=-1),
                              np.linalg.norm(p - r, axis=-1)]), axis=0)
    c, b, a = sides
    q = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return 0.25 * np.sqrt(np.maximum(q, 0.0))


def test_1_field_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    n = 10_000
    p, r, t = (rng.uniform(-2, 2, (n, 3)) for _ in range(3))
    f = field_value(p, r, t)
    # relative to |p - R| |p - T|, the scale of every term of the cross product
    scale = np.linalg.norm(p - r, axis=1) * np.linalg.norm(p - t, axis=1)
    worst = {}

    Q = np.stack([random_rotation(rng) for _ in range(n)])
    shift = rng.uniform(-5, 5, (n, 3))

    def move(x):
        return np.einsum("nij,nj->ni", Q, x) + shift

    rotated = field_value(move(p), move(r), move(t))
    worst["equivariance"] = np.max(np.linalg.norm(rotated - np.einsum("nij,nj->ni", Q, f), axis=1) / scale)

    zero_r = np.linalg.norm(field_value(r, r, t), axis=1)
    zero_t = np.linalg.norm(field_value(t, r, t), axis=1)
    worst["zero at endpoints"] = max(zero_r.max(), zero_t.max())

    s = rng.uniform(-2, 3, (n, 1))
    on_line = r + s * (t - r)
    line_scale = np.linalg.norm(on_line - r, axis=1) * np.linalg.norm(on_line - t, axis=1) + 1e-300
    worst["zero on line"] = np.max(np.linalg.norm(field_value(on_line, r, t), axis=1) / line_scale)

    worst["area"] = np.max(np.abs(np.linalg.norm(f, axis=1) - 2 * kahan_area(p, r, t)) / scale)
    seconds = time.perf_counter() - t0
    ok = all(v <= 1e-9 for v in worst.values()) and seconds < 5
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {seconds:.2f}s"
    assert record(1, "occlusion field suite", ok, detail)


def test_2_gradient_checks():
    t0 = time.perf_counter()
    cases = {**gradcases.SUBMODULES, "AffordanceNet+objective": gradcases.full_objective}
    errors = {name: gradcases.sweep(case, n_configs=100, seed=7) for name, case in cases.items()}
    seconds = time.perf_counter() - t0
    name, worst = max(errors.items(), key=lambda kv: kv[1])
    ok = worst < 1e-4 and seconds < 120
    assert record(2, "gradient checks", ok, f"{len(cases)} modules x 100 configs, worst {worst:.1e} in {name}; "
                                            f"{seconds:.1f}s")


def test_3_oracle_monotonicity():
    t0 = time.perf_counter()
    flips = evaluations = drops = 0
    for i in range(1000):
        k = i % 4
        base = generate_scene(SceneSpec(num_occluders=k, seed=10_000 + i))
        # the same seed replays the first k placements and then adds one more occluder
        grown = generate_scene(SceneSpec(num_occluders=k + 1, seed=10_000 + i))
        cloud = sample_cloud(base, 1024, 256, seed=i)
        rng = np.random.default_rng(i)
        for p in rng.choice(cloud.target_indices, 8, replace=False):
            for action in oracle.ACTIONS:
                before = oracle.evaluate(base, cloud, int(p), action).label
                after = oracle.evaluate(grown, cloud, int(p), action).label
                flips += before < after
                drops += before > after
                evaluations += 1
    seconds = time.perf_counter() - t0
    ok = flips == 0 and seconds < 120
    assert record(3, "oracle monotonicity", ok, f"1000 pairs, {evaluations} evaluations, {flips} 0->1 flips, "
                                                f"{drops} 1->0; {seconds:.1f}s")


def test_4_triplet_validity():
    sets = [collect(CollectSpec(n_scenes=30, quotas={"push": (15, 15), "pull": (10, 20)}, n_out=512, seed=3)),
            collect(CollectSpec(n_scenes=10, quotas={"push": (5, 5), "pull": (3, 6)}, n_out=512, seed=3,
                                split=VALIDATION))]
    total = bad = relabel = 0
    for ds in sets:
        for trip in ds.triplets():
            total += 1
            bad += bool(trip.problems())
            pos = trip.positive
            verdict = oracle.evaluate(ds.scenes[pos.scene_ref], ds.clouds[pos.cloud_ref], pos.point_index, pos.action)
            relabel += verdict.label != trip.anchor.label
        relabel += ds.verify_labels()
    ok = total > 0 and bad == 0 and relabel == 0
    assert record(4, "triplet validity", ok, f"{total} triplets, {bad} with problems, {relabel} oracle mismatches")


def test_5_metric_equivalence():
    rng = np.random.default_rng(5)
    worst_f = worst_ap = 0.0
    for i in range(100):
        n = int(rng.integers(2, 200))
        # coarse scores so ties are common
        scores = np.round(rng.random(n), int(rng.integers(1, 4)))
        labels = (rng.random(n) < rng.uniform(0.1, 0.9)).astype(int)
        labels[int(rng.integers(n))] = 1
        worst_f = max(worst_f, abs(f_score(scores, labels) - brute_f_score(scores.tolist(), labels.tolist())))
        worst_ap = max(worst_ap, abs(average_precision(scores, labels)
                                     - brute_average_precision(scores.tolist(), labels.tolist())))
    ok = worst_f <= 1e-12 and worst_ap <= 1e-12
    assert record(5, "metric equivalence", ok, f"100 vectors, max |F diff| {worst_f:.1e}, max |AP diff| {worst_ap:.1e}")


@pytest.fixture(scope="module")
def protocol():
    cfg = config.load(ROOT / "configs" / "acceptance.yaml")
    t0 = time.perf_counter()
    result = run_protocol(cfg, cfg["protocol"]["seeds"])
    result["wall_seconds"] = time.perf_counter() - t0
    result["config"] = cfg
    return result


def test_6_ablation_ordering(protocol):
    ap = protocol["summary"]["average_precision"]
    lines, ok = [], protocol["wall_seconds"] < 1800
    for action in oracle.ACTIONS:
        for split in ("test-seen", "test-novel"):
            full = ap[f"{action}/{split}/none"]
            gaps = [full - ap[f"{action}/{split}/{v}"] for v in ("no-of", "no-cl")]
            ok &= min(gaps) >= 0
            lines.append(f"{action} {split} full {100 * full:.1f} vs -OF {100 * gaps[0]:+.1f} -CL {100 * gaps[1]:+.1f}")
    detail = "; ".join(lines) + f"; {protocol['wall_seconds'] / 60:.1f} min"
    assert record(6, "full model beats both ablations", ok, detail)


def test_7_proposals_beat_random(protocol):
    s = protocol["summary"]
    ok = all(s["sma"][a] > s["census"][a] for a in oracle.ACTIONS)
    detail = "; ".join(f"{a} sma {s['sma'][a]:.3f} vs random {s['census'][a]:.3f} "
                       f"({s['sma'][a] / max(s['census'][a], 1e-12):.2f}x)" for a in oracle.ACTIONS)
    assert record(7, "proposal accuracy above random", ok, detail)


def test_8_triplet_ordering(protocol):
    s, quotas = protocol["summary"], protocol["config"]["dataset"]["validation_quotas"]
    # every action's held-out set holds exactly its quota of triplets
    counts = {a: sum(quotas[a]) for a in oracle.ACTIONS}
    pooled = sum(s["ordering"][a] * counts[a] for a in oracle.ACTIONS) / sum(counts.values())
    detail = f"pooled {pooled:.3f}; " + ", ".join(f"{a} {s['ordering'][a]:.3f}" for a in oracle.ACTIONS)
    assert record(8, "held-out triplet ordering", pooled >= 0.7, detail)


def test_9_byte_determinism(tmp_path):
    cfg = ROOT / "configs" / "tiny.yaml"

    def pipeline(out: Path):
        steps = [
            ("gen-scenes", "--out", out / "scenes"),
            ("build-dataset", "--out", out / "train"),
            ("build-dataset", "--split", "test", "--out", out / "test"),
            ("train", "--data", out / "train", "--out", out / "model.ckpt"),
            ("eval", "--checkpoint", out / "model.ckpt", "--data", out / "test", "--out", out / "report.json"),
        ]
        for step in steps:
            assert main([str(a) for a in (*step, "--config", cfg)]) == 0
        digests = {}
        for name in ("scenes", "train", "test", "model.ckpt", "report.json"):
            h = hashlib.sha256()
            for f in sorted((out / name).rglob("*")) if (out / name).is_dir() else [out / name]:
                if f.is_file():
                    h.update(str(f.relative_to(out)).encode() + f.read_bytes())
            digests[name] = h.hexdigest()
        return digests

    a, b = pipeline(tmp_path / "a"), pipeline(tmp_path / "b")
    same = [k for k in a if a[k] == b[k]]
    assert record(9, "byte determinism", same == list(a), f"identical: {', '.join(same)}")

