import json
from dataclasses import replace

import numpy as np
import pytest

from envaff.dataset import (
    ANCHOR,
    ID_BASE,
    POSITIVE,
    TEST_NOVEL,
    VALIDATION,
    CollectSpec,
    InteractionRecord,
    Triplet,
    check_dataset,
    collect,
    load,
    parse_records,
    records_bytes,
    save,
)
from envaff.errors import CorruptData, QuotaFailure, VersionMismatch
from conftest import TINY_QUOTAS


class TestCollect:
    def test_quotas_exact(self, tiny_train):
        counts = tiny_train.manifest["counts"]
        for action, (succ, fail) in TINY_QUOTAS.items():
            assert counts[action] == {"success": succ, "failure": fail}
        assert tiny_train.manifest["n_triplets"] == sum(map(sum, TINY_QUOTAS.values()))
        assert tiny_train.manifest["occluder_counts"] == {"1": 6}

    def test_triplets_valid_and_labels_verified(self, tiny_train):
        trips = tiny_train.triplets()
        assert trips and all(t.problems() == [] for t in trips)
        assert tiny_train.verify_labels() == 0
        for t in trips:
            base, pos = tiny_train.scenes[t.anchor.scene_ref], tiny_train.scenes[t.positive.scene_ref]
            assert len(pos.occluders) == len(base.occluders) + 1

    def test_pull_handle_share(self, tiny_train):
        pulls = [r for r in tiny_train.records if r.action == "pull" and r.role == ANCHOR]
        on_handle = [tiny_train.clouds[r.cloud_ref].handle[r.point_index] for r in pulls]
        assert any(on_handle)

    def test_quota_failure(self):
        spec = CollectSpec(n_scenes=2, quotas={"pull": (1, 0)}, handle_fraction=0.0, n_out=128, sample_budget=40)
        with pytest.raises(QuotaFailure) as info:
            collect(spec)
        assert info.value.starved == [("pull", "success")]

    def test_rejects_test_split(self):
        with pytest.raises(ValueError):
            collect(CollectSpec(split=TEST_NOVEL))

    def test_validation_ids_disjoint(self, tiny_train):
        val = collect(CollectSpec(n_scenes=3, quotas={"push": (1, 1)}, n_out=128, seed=0, split=VALIDATION))
        assert val.split == VALIDATION
        assert all(i >= ID_BASE[VALIDATION] for i in val.scenes)
        assert not set(val.scenes) & set(tiny_train.scenes)
        assert val.triplets()[0].problems() == []

    def test_deterministic(self):
        spec = CollectSpec(n_scenes=3, quotas={"push": (1, 1)}, n_out=128, seed=3)
        a, b = collect(spec), collect(spec)
        assert records_bytes(a.records) == records_bytes(b.records)
        assert a.manifest == b.manifest


class TestTestSets:
    def test_isolation_and_occluders(self, tiny_train, tiny_tests):
        train_ids = set(tiny_train.scenes)
        for name, ds in tiny_tests.items():
            assert ds.split == name
            assert not train_ids & set(ds.scenes)
            assert all(2 <= len(ds.scenes[i].occluders) <= 4 for i in ds.manifest["scene_ids"])
            assert ds.verify_labels() == 0
        assert not set(tiny_tests["test-seen"].scenes) & set(tiny_tests["test-novel"].scenes)


class TestTripletProblems:
    def make(self, **changes):
        rec = InteractionRecord(0, 1, 1, (0.8, 0.0, 0.0), 5, "push", 1, None, ANCHOR, 0)
        pos = replace(rec, record_id=1, scene_ref=9, cloud_ref=9, role=POSITIVE)
        neg = replace(rec, record_id=2, point_index=7, label=0, failure_reason="unreachable")
        trip = {"anchor": rec, "positive": pos, "negative": neg}
        for key, kw in changes.items():
            trip[key] = replace(trip[key], **kw)
        return Triplet(**trip).problems()

    def test_valid(self):
        assert self.make() == []

    @pytest.mark.parametrize("changes, message", [
        ({"positive": {"point_index": 6}}, "positive point differs"),
        ({"positive": {"label": 0, "failure_reason": "unreachable"}}, "positive label differs"),
        ({"negative": {"point_index": 5}}, "negative point equals"),
        ({"negative": {"scene_ref": 2}}, "another scene"),
        ({"negative": {"robot": (0.7, 0.0, 0.0)}}, "robot differs"),
        ({"negative": {"action": "pull"}}, "action differs"),
    ])
    def test_each_problem(self, changes, message):
        problems = self.make(**changes)
        assert len(problems) == 1 and message in problems[0]


class TestSerialization:
    def test_roundtrip(self, tiny_train, tmp_path):
        save(tiny_train, tmp_path / "d")
        back = load(tmp_path / "d")
        assert back.manifest == json.loads(json.dumps(tiny_train.manifest))
        assert back.records == tiny_train.records
        assert all(back.clouds[k].equals(tiny_train.clouds[k]) for k in tiny_train.clouds)
        assert check_dataset(back) == []

    def test_records_bytes(self, tiny_train):
        assert parse_records(records_bytes(tiny_train.records)) == tiny_train.records

    def test_truncated(self, tiny_train, tmp_path):
        save(tiny_train, tmp_path / "d")
        path = tmp_path / "d" / "records.bin"
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(CorruptData):
            load(tmp_path / "d")

    def test_bumped_version(self, tiny_train, tmp_path):
        data = bytearray(records_bytes(tiny_train.records))
        data[7] += 1
        with pytest.raises(VersionMismatch):
            parse_records(bytes(data))
        save(tiny_train, tmp_path / "d")
        m = json.loads((tmp_path / "d" / "manifest.json").read_text())
        m["format_version"] += 1
        (tmp_path / "d" / "manifest.json").write_text(json.dumps(m))
        with pytest.raises(VersionMismatch):
            load(tmp_path / "d")

    def test_tampered_manifest(self, tiny_train, tmp_path):
        save(tiny_train, tmp_path / "d")
        m = json.loads((tmp_path / "d" / "manifest.json").read_text())
        m["counts"]["push"]["success"] += 1
        (tmp_path / "d" / "manifest.json").write_text(json.dumps(m))
        with pytest.raises(CorruptData):
            load(tmp_path / "d")

    def test_missing_cloud(self, tiny_train, tmp_path):
        save(tiny_train, tmp_path / "d")
        next((tmp_path / "d" / "clouds").iterdir()).unlink()
        with pytest.raises(CorruptData):
            load(tmp_path / "d")
