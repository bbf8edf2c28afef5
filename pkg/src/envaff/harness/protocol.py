"""Full train-on-one-occluder / test-on-many protocol across seeds and ablations.

``run_protocol`` builds every split per seed, trains the full model and each
ablation per action, and collects the numbers the directional checks compare:
average precision per (action, split, variant), proposal accuracy against the
random-proposal census, and the embedding ordering of held-out triplets.
"""

from __future__ import annotations

import copy
import logging
import time
from typing import Sequence

import numpy as np

from .. import dataset
from ..learn import AffordanceModel, with_ablation
from ..oracle import ACTIONS, OracleConfig
from .evaluation import ProposalPolicy, census_rate, evaluate_split, model_scorer, sample_manipulation_accuracy, triplet_ordering

log = logging.getLogger(__name__)

VARIANTS = ("none", "no-of", "no-cl")


def oracle_config(cfg: dict) -> OracleConfig:
    return OracleConfig(**cfg["oracle"])


def make_model(cfg: dict, ablation: str | None = None) -> AffordanceModel:
    m, t, f = cfg["model"], cfg["train"], cfg["field"]
    model = AffordanceModel(
        k_significant=f["k_significant"], include_target_points=f["include_target_points"], field_coords=f["coords"],
        field_height=f["robot_height"], width=m["width"], feature_dim=m["feature_dim"],
        scene_hidden=tuple(m["scene_hidden"]), predictor_hidden=m["predictor_hidden"], batch_size=t["batch_size"], learning_rate=t["learning_rate"],
        alpha=t["alpha"], lambda_cl=t["lambda_cl"], epochs=t["epochs"], threshold=cfg["eval"]["threshold"],
        random_state=cfg["seed"],
    )
    return with_ablation(model, t["ablation"] if ablation is None else ablation)


def collect_spec(cfg: dict, split: str = dataset.TRAIN) -> dataset.CollectSpec:
    d = cfg["dataset"]
    held_out = split == dataset.VALIDATION
    quotas = d["validation_quotas"] if held_out else d["quotas"]
    return dataset.CollectSpec(
        n_scenes=d["validation_scenes"] if held_out else d["n_scenes"],
        quotas={k: tuple(v) for k, v in quotas.items()},
        handle_fraction=d["handle_fraction"], seed=cfg["seed"], n_out=d["n_out"],
        sample_budget=d["sample_budget"], oracle=oracle_config(cfg), split=split,
    )


def test_spec(cfg: dict) -> dataset.TestSpec:
    t = cfg["test"]
    return dataset.TestSpec(
        n_scenes=t["n_scenes"], occluders=tuple(t["occluders"]), records_per_scene=t["records_per_scene"],
        handle_fraction=cfg["dataset"]["handle_fraction"], seed=cfg["seed"], n_out=t["n_out"],
        oracle=oracle_config(cfg),
    )


def _scene_pairs(ds, n):
    return [(ds.scenes[i], ds.clouds[i]) for i in ds.manifest["scene_ids"][:n]]


def run_seed(cfg: dict, seed: int, variants: Sequence[str] = VARIANTS, actions: Sequence[str] = ACTIONS) -> dict:
    """Every measurement of one seed; see ``run_protocol`` for the layout."""
    cfg = copy.deepcopy(cfg)
    cfg["seed"] = seed
    t0 = time.perf_counter()
    train = dataset.collect(collect_spec(cfg))
    held_out = dataset.collect(collect_spec(cfg, dataset.VALIDATION))
    tests = dataset.build_test_sets(test_spec(cfg))
    log.info("seed %d: data built in %.1fs", seed, time.perf_counter() - t0)
    e = cfg["eval"]
    policy = ProposalPolicy(e["threshold"], e["proposals_per_scene"], seed)
    proposal_scenes = [p for name in sorted(tests) for p in _scene_pairs(tests[name], e["sma_scenes"])]
    out = {"seed": seed, "cells": [], "proposals": {}, "ordering": {}, "train_scene_ids": train.manifest["scene_ids"],
           "eval_scene_ids": {k: v.manifest["scene_ids"] for k, v in {**tests, dataset.VALIDATION: held_out}.items()}}
    for action in actions:
        X, y = train.training_data(action)
        for variant in variants:
            t1 = time.perf_counter()
            model = make_model(cfg, variant).fit(X, y)
            for name in sorted(tests):
                rep = evaluate_split(model, tests[name], action, seed, e["threshold"])
                out["cells"].append({"action": action, "split": name, "variant": variant,
                                     "average_precision": rep.average_precision, "f_score": rep.f_score})
            if variant == "none":
                res = sample_manipulation_accuracy(model_scorer(model), proposal_scenes, action, policy,
                                                   oracle_config(cfg))
                res["census"] = census_rate(proposal_scenes, action, oracle_config(cfg))
                out["proposals"][action] = res
                out["ordering"][action] = triplet_ordering(model, held_out, action)
            log.info("seed %d %s %s: %.1fs", seed, action, variant, time.perf_counter() - t1)
    out["seconds"] = time.perf_counter() - t0
    return out


def summarize(runs: list) -> dict:
    """Seed means of every cell, proposal rate and ordering fraction."""
    ap: dict = {}
    for run in runs:
        for c in run["cells"]:
            ap.setdefault(f'{c["action"]}/{c["split"]}/{c["variant"]}', []).append(c["average_precision"])
    actions = sorted({a for run in runs for a in run["proposals"]})
    return {
        "seeds": [run["seed"] for run in runs],
        "average_precision": {k: float(np.mean(v)) if None not in v else None for k, v in sorted(ap.items())},
        "sma": {a: float(np.mean([run["proposals"][a]["sma"] for run in runs])) for a in actions},
        "census": {a: float(np.mean([run["proposals"][a]["census"] for run in runs])) for a in actions},
        "ordering": {a: float(np.mean([run["ordering"][a] for run in runs])) for a in actions},
        "seconds": float(sum(run["seconds"] for run in runs)),
    }


def run_protocol(cfg: dict, seeds: Sequence[int] = (0, 1, 2), variants: Sequence[str] = VARIANTS,
                 actions: Sequence[str] = ACTIONS) -> dict:
    """``{"runs": [per-seed results], "summary": seed means}``.

    Per seed: ``cells`` (AP and F per action, split and variant), ``proposals``
    (full-model proposal accuracy and the random-proposal census on the same
    scenes) and ``ordering`` (share of held-out triplets whose anchor is closer
    to its positive than to its negative in scene-feature space).
    """
    runs = [run_seed(cfg, s, variants, actions) for s in seeds]
    return {"runs": runs, "summary": summarize(runs)}
