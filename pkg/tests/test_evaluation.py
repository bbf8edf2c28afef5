import math

import numpy as np
import pytest

from envaff import oracle
from envaff.cloud import parse_ply
from envaff.errors import EmptyScene
from envaff.harness import evaluation
from envaff.harness.evaluation import (
    GRAY,
    ProposalPolicy,
    census_rate,
    evaluate_protocol,
    evaluate_split,
    export_heatmap,
    oracle_scorer,
    random_scorer,
    sample_manipulation_accuracy,
    triplet_ordering,
)
from envaff.learn import AffordanceModel

SMALL = dict(width=8, feature_dim=8, scene_hidden=(8,), predictor_hidden=8, k_significant=16, batch_size=6)


def pairs(ds):
    return [(ds.scenes[i], ds.clouds[i]) for i in ds.manifest["scene_ids"]]


def with_successes(ds, action):
    return [(s, c) for s, c in pairs(ds) if oracle.census(s, c, action).max() == 1]


@pytest.fixture(scope="module")
def model(tiny_train):
    return AffordanceModel(epochs=2, **SMALL).fit(*tiny_train.training_data("push"))


class TestSma:
    def test_oracle_scorer_is_perfect(self, tiny_train, tiny_tests):
        for action in ("push", "pull"):
            scenes = with_successes(tiny_train, action) + with_successes(tiny_tests["test-seen"], action)
            assert scenes
            assert sample_manipulation_accuracy(oracle_scorer(), scenes, action)["sma"] == 1.0

    def test_three_of_ten(self, tiny_train, monkeypatch):
        calls = iter(range(10))
        monkeypatch.setattr(evaluation.oracle, "evaluate",
                            lambda *a, **k: oracle.Verdict(1) if next(calls) < 3 else oracle.Verdict(0, oracle.UNREACHABLE))
        res = sample_manipulation_accuracy(random_scorer(), pairs(tiny_train)[:1], "push", ProposalPolicy(proposals_per_scene=10))
        assert (res["successes"], res["proposals"], res["sma"]) == (3, 10, 0.3)

    def test_random_scorer_matches_census(self, tiny_train):
        scenes = pairs(tiny_train)
        n = 400
        res = sample_manipulation_accuracy(random_scorer(1), scenes, "push", ProposalPolicy(proposals_per_scene=n))
        base = census_rate(scenes, "push")
        sigma = math.sqrt(base * (1 - base) / (n * len(scenes)))
        assert abs(res["sma"] - base) <= 4 * sigma + 0.01

    def test_deterministic(self, model, tiny_tests):
        scorer = evaluation.model_scorer(model)
        a = sample_manipulation_accuracy(scorer, pairs(tiny_tests["test-novel"]), "push")
        b = sample_manipulation_accuracy(scorer, pairs(tiny_tests["test-novel"]), "push")
        assert a == b

    def test_empty(self):
        with pytest.raises(EmptyScene):
            sample_manipulation_accuracy(random_scorer(), [], "push")

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            ProposalPolicy(threshold=1.0)
        with pytest.raises(ValueError):
            ProposalPolicy(proposals_per_scene=0)


class TestReports:
    def test_protocol_cells(self, model, tiny_tests):
        reports = evaluate_protocol({"push": model, "pull": model}, tiny_tests)
        assert len(reports) == 4
        assert {(r.action, r.split) for r in reports} == {(a, s) for a in ("push", "pull") for s in tiny_tests}
        again = evaluate_protocol({"push": model, "pull": model}, tiny_tests)
        assert [r.to_dict() for r in reports] == [r.to_dict() for r in again]

    def test_split_counts(self, model, tiny_tests):
        ds = tiny_tests["test-seen"]
        rep = evaluate_split(model, ds, "push", policy=ProposalPolicy(proposals_per_scene=2), sma_scenes=2)
        c = rep.counts
        assert c["tp"] + c["fp"] + c["fn"] + c["tn"] == c["records"] == len(ds.probes("push"))
        assert c["proposals"] == 4 and 0 <= rep.sma <= 1

    def test_triplet_ordering(self, model, tiny_train):
        v = triplet_ordering(model, tiny_train, "push")
        assert 0 <= v <= 1

    def test_ordering_needs_triplets(self, model, tiny_tests):
        with pytest.raises(EmptyScene):
            triplet_ordering(model, tiny_tests["test-seen"])


def test_heatmap(model, tiny_tests, tmp_path):
    ds = tiny_tests["test-seen"]
    sid = ds.manifest["scene_ids"][0]
    scene, cloud = ds.scenes[sid], ds.clouds[sid]
    ply, csv_path = export_heatmap(model, scene, cloud, "push", tmp_path / "a")
    ply2, csv2 = export_heatmap(model, scene, cloud, "push", tmp_path / "b")
    assert ply.read_bytes() == ply2.read_bytes() and csv_path.read_text() == csv2.read_text()
    back, colors = parse_ply(ply.read_bytes())
    assert len(back) == len(cloud)
    colored = np.flatnonzero(np.any(colors != np.array(GRAY, np.uint8), axis=1))
    assert np.array_equal(colored, cloud.target_indices)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "index,score" and len(lines) == len(cloud.target_indices) + 1
