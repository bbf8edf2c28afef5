"""Command line driver: ``envaff <subcommand> [--config FILE] [overrides]``.

Exit codes: 0 success, 2 usage error, 3 invalid configuration, 4 pipeline
error (bad data, failed placement, unmet quota, ...), 5 I/O failure.  On any
failure the last stderr line is ``error: {json}`` with ``type`` and
``message`` (plus ``path`` for configuration errors).
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
from pathlib import Path

import numpy as np

from .. import __version__, dataset
from ..cloud import read_ply, write_ply, sample_cloud
from ..errors import ConfigError, EnvAffError
from ..learn import AffordanceModel, Query
from ..scene import FAMILY_POOLS, Scene
from . import config as config_mod
from .evaluation import ProposalPolicy, evaluate_split, export_heatmap
from .protocol import collect_spec, make_model, run_protocol, test_spec

EXIT_USAGE, EXIT_CONFIG, EXIT_PIPELINE, EXIT_IO = 2, 3, 4, 5


def provenance(cfg: dict, command: str) -> dict:
    return {
        "command": command,
        "config_sha256": config_mod.digest(cfg),
        "seed": cfg["seed"],
        "versions": {"envaff": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }


def _write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _apply_overrides(cfg: dict, args) -> dict:
    raw = json.loads(json.dumps(cfg))
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.action is not None:
        raw["train"]["action"] = args.action
    if args.ablation is not None:
        raw["train"]["ablation"] = args.ablation
    if args.k_significant is not None:
        raw["field"]["k_significant"] = args.k_significant
    return config_mod.validate(raw)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_scenes(cfg, args):
    s = cfg["scenes"]
    split = args.split or dataset.TRAIN
    if split not in dataset.SPLITS:
        raise ConfigError("--split", f"expected one of {', '.join(dataset.SPLITS)}")
    out = Path(args.out)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    (out / "clouds").mkdir(parents=True, exist_ok=True)
    pool = FAMILY_POOLS[s["pool"]]
    ids = []
    for i in range(s["count"]):
        scene = dataset.make_scene(split, i, cfg["seed"], s["occluders"], pool)
        cloud = sample_cloud(scene, 4 * s["n_out"], s["n_out"], seed=scene.rng_seed)
        _write_json(out / "scenes" / f"{scene.id}.json", scene.to_dict())
        write_ply(out / "clouds" / f"{scene.id}.ply", cloud)
        ids.append(scene.id)
    _write_json(out / "index.json", {"provenance": provenance(cfg, "gen-scenes"), "split": split, "scene_ids": ids})
    return {"scenes": len(ids), "out": str(out)}


def cmd_build_dataset(cfg, args):
    split = args.split or dataset.TRAIN
    out = Path(args.out)
    if split in (dataset.TRAIN, dataset.VALIDATION):
        built = {split: dataset.collect(collect_spec(cfg, split))}
        targets = {split: out}
    elif split in ("test", dataset.TEST_SEEN, dataset.TEST_NOVEL):
        built = dataset.build_test_sets(test_spec(cfg))
        names = [dataset.TEST_SEEN, dataset.TEST_NOVEL] if split == "test" else [split]
        targets = {n: out / n if split == "test" else out for n in names}
    else:
        raise ConfigError("--split", "expected train, validation, test, test-seen or test-novel")
    summary = {}
    for name, path in targets.items():
        ds = built[name]
        ds.manifest["provenance"] = provenance(cfg, "build-dataset")
        dataset.save(ds, path)
        summary[name] = ds.manifest["counts"]
    return summary


def cmd_train(cfg, args):
    ds = dataset.load(args.data)
    action = cfg["train"]["action"]
    X, y = ds.training_data(action)
    model = make_model(cfg).fit(X, y)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out, meta={"action": action, "ablation": cfg["train"]["ablation"], "provenance": provenance(cfg, "train")})
    with out.with_suffix(".csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "total", "affordance", "contrastive"])
        for i, row in enumerate(zip(model.loss_curve_, model.aff_curve_, model.cl_curve_)):
            w.writerow([i, *(repr(float(v)) for v in row)])
    return {"checkpoint": str(out), "final_loss": model.loss_curve_[-1] if model.loss_curve_ else None}


def _load_model(args):
    if not args.checkpoint:
        raise ConfigError("--checkpoint", "a checkpoint is required")
    return AffordanceModel.load(args.checkpoint)


def cmd_eval(cfg, args):
    model = _load_model(args)
    action = model.meta_.get("action", cfg["train"]["action"]) if args.action is None else args.action
    root = Path(args.data)
    splits = [args.split] if args.split else [dataset.TEST_SEEN, dataset.TEST_NOVEL]
    e = cfg["eval"]
    policy = ProposalPolicy(e["threshold"], e["proposals_per_scene"], cfg["seed"])
    reports = []
    for split in splits:
        path = root / split if (root / split).is_dir() else root
        ds = dataset.load(path)
        reports.append(evaluate_split(model, ds, action, cfg["seed"], e["threshold"], policy, e["sma_scenes"]).to_dict())
    doc = {"provenance": provenance(cfg, "eval"), "checkpoint": model.meta_, "reports": reports}
    if args.out:
        _write_json(args.out, doc)
    return {"reports": reports}


def _scene_and_cloud(args):
    if not args.scene or not args.cloud:
        raise ConfigError("--scene/--cloud", "both a scene JSON and a cloud PLY are required")
    scene = Scene.from_dict(json.loads(Path(args.scene).read_text()))
    return scene, read_ply(args.cloud)


def cmd_predict(cfg, args):
    model = _load_model(args)
    scene, cloud = _scene_and_cloud(args)
    idx = cloud.target_indices if args.point is None else np.array([args.point])
    scores = model.predict_proba([Query(cloud, scene.robot, int(i)) for i in idx])
    result = {"provenance": provenance(cfg, "predict"), "scene": scene.id,
              "scores": [{"index": int(i), "score": float(s)} for i, s in zip(idx, scores)]}
    if args.out:
        _write_json(args.out, result)
    return {"points": len(idx), "max_score": float(scores.max())}


def cmd_export_heatmap(cfg, args):
    model = _load_model(args)
    scene, cloud = _scene_and_cloud(args)
    action = model.meta_.get("action", cfg["train"]["action"])
    ply, csv_path = export_heatmap(model, scene, cloud, action, args.out)
    return {"ply": str(ply), "csv": str(csv_path)}


def cmd_protocol(cfg, args):
    seeds = [cfg["seed"]] if args.seed is not None else cfg["protocol"]["seeds"]
    actions = [args.action] if args.action else ["push", "pull"]
    result = run_protocol(cfg, seeds, actions=actions)
    _write_json(args.out, {"provenance": provenance(cfg, "protocol"), **result})
    return result["summary"]


COMMANDS = {
    "gen-scenes": cmd_gen_scenes,
    "build-dataset": cmd_build_dataset,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "export-heatmap": cmd_export_heatmap,
    "protocol": cmd_protocol,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="envaff", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML run configuration")
        s.add_argument("--seed", type=int)
        s.add_argument("--action", choices=("push", "pull"))
        s.add_argument("--split")
        s.add_argument("--out")
        s.add_argument("--k-significant", type=int, dest="k_significant")
        s.add_argument("--ablation", choices=("none", "no-of", "no-cl"))
        s.add_argument("--data", help="dataset directory")
        s.add_argument("--checkpoint")
        s.add_argument("--scene")
        s.add_argument("--cloud")
        s.add_argument("--point", type=int)
    return p


def _fail(code: int, exc: Exception) -> int:
    err = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        err["path"] = exc.path
    print("error: " + json.dumps(err, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    try:
        cfg = _apply_overrides(config_mod.load(args.config), args)
        needs_out = args.command in ("gen-scenes", "build-dataset", "train", "export-heatmap", "protocol")
        if needs_out and not args.out:
            raise ConfigError("--out", "an output path is required")
        if args.command in ("train", "eval") and not args.data:
            raise ConfigError("--data", "a dataset directory is required")
        print("# provenance " + json.dumps(provenance(cfg, args.command), sort_keys=True))
        result = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except (OSError,) as exc:
        return _fail(EXIT_IO, exc)
    except (EnvAffError, ValueError) as exc:
        return _fail(EXIT_PIPELINE, exc)
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
