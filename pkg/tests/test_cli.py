import hashlib
import json
from pathlib import Path

import pytest

from envaff.harness.cli import EXIT_CONFIG, EXIT_IO, EXIT_PIPELINE, EXIT_USAGE, main
from envaff.learn import AffordanceModel

TINY = (Path(__file__).parents[1] / "configs" / "tiny.yaml").read_text()


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def run(*argv):
    return main([str(a) for a in argv])


def last_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error: ")
    return json.loads(err[len("error: "):])


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "run.yaml").write_text(TINY)
    cfg = d / "run.yaml"
    assert run("gen-scenes", "--config", cfg, "--out", d / "scenes") == 0
    assert run("build-dataset", "--config", cfg, "--out", d / "train") == 0
    assert run("build-dataset", "--config", cfg, "--split", "test", "--out", d / "test") == 0
    assert run("train", "--config", cfg, "--data", d / "train", "--out", d / "m.ckpt") == 0
    return d


def test_pipeline_outputs(work):
    index = json.loads((work / "scenes" / "index.json").read_text())
    assert len(index["scene_ids"]) == 2 and index["provenance"]["seed"] == 5
    assert (work / "test" / "test-seen" / "manifest.json").exists()
    assert (work / "m.csv").read_text().startswith("epoch,total,affordance,contrastive\n")
    model = AffordanceModel.load(work / "m.ckpt")
    assert model.meta_["action"] == "push" and model.meta_["provenance"]["config_sha256"]


def test_eval_writes_reports(work):
    out = work / "report.json"
    assert run("eval", "--config", work / "run.yaml", "--checkpoint", work / "m.ckpt", "--data", work / "test",
               "--out", out) == 0
    doc = json.loads(out.read_text())
    assert [r["split"] for r in doc["reports"]] == ["test-seen", "test-novel"]
    assert all(r["counts"]["proposals"] == 2 for r in doc["reports"])
    assert "config_sha256" in doc["provenance"]


def test_predict_and_heatmap(work):
    sid = json.loads((work / "scenes" / "index.json").read_text())["scene_ids"][0]
    scene, cloud = work / "scenes" / "scenes" / f"{sid}.json", work / "scenes" / "clouds" / f"{sid}.ply"
    common = ("--config", work / "run.yaml", "--checkpoint", work / "m.ckpt", "--scene", scene, "--cloud", cloud)
    assert run("predict", *common, "--out", work / "pred.json") == 0
    scores = json.loads((work / "pred.json").read_text())["scores"]
    assert scores and all(0 < s["score"] < 1 for s in scores)
    assert run("export-heatmap", *common, "--out", work / "heat") == 0
    assert (work / "heat.ply").exists() and (work / "heat.csv").exists()


def test_byte_determinism(work, tmp_path):
    cfg = work / "run.yaml"
    assert run("gen-scenes", "--config", cfg, "--out", tmp_path / "scenes") == 0
    assert tree_digest(tmp_path / "scenes") == tree_digest(work / "scenes")
    assert run("build-dataset", "--config", cfg, "--out", tmp_path / "train") == 0
    assert tree_digest(tmp_path / "train") == tree_digest(work / "train")
    assert run("train", "--config", cfg, "--data", work / "train", "--out", tmp_path / "m.ckpt") == 0
    assert (tmp_path / "m.ckpt").read_bytes() == (work / "m.ckpt").read_bytes()


def test_ablation_flag_reaches_the_model(work, tmp_path):
    assert run("train", "--config", work / "run.yaml", "--data", work / "train", "--ablation", "no-of",
               "--out", tmp_path / "a.ckpt") == 0
    model = AffordanceModel.load(tmp_path / "a.ckpt")
    assert model.use_field is False and model.meta_["ablation"] == "no-of"


def test_k_override(work, tmp_path):
    assert run("train", "--config", work / "run.yaml", "--data", work / "train", "--k-significant", "4",
               "--out", tmp_path / "k.ckpt") == 0
    assert AffordanceModel.load(tmp_path / "k.ckpt").k_significant == 4


def test_unknown_flag(capsys):
    assert run("train", "--frobnicate") == EXIT_USAGE
    assert "usage:" in capsys.readouterr().err


def test_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("train: {epochs: -1}\n")
    assert run("gen-scenes", "--config", bad, "--out", tmp_path / "o") == EXIT_CONFIG
    err = last_error(capsys)
    assert err["type"] == "ConfigError" and err["path"] == "train"


def test_missing_out(capsys):
    assert run("gen-scenes") == EXIT_CONFIG
    assert last_error(capsys)["path"] == "--out"


def test_corrupt_data(work, tmp_path, capsys):
    (tmp_path / "manifest.json").write_text("{not json")
    assert run("train", "--config", work / "run.yaml", "--data", tmp_path, "--out", tmp_path / "m.ckpt") == EXIT_PIPELINE
    assert last_error(capsys)["type"] == "CorruptData"


def test_io_failure(work, tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("gen-scenes", "--config", work / "run.yaml", "--out", blocker / "sub") == EXIT_IO
    assert last_error(capsys)["type"] in ("FileExistsError", "NotADirectoryError")
