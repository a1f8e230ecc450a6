"""Tests for annotation records, the store, manifests, splits, statistics."""

import json
import math
import threading

import numpy as np
import pytest

from posefield import dataset, field
from posefield.camera import PoseParams
from posefield.dataset import (
    AnnotationRecord,
    AnnotationStore,
    CategoryEntry,
    DatasetManifest,
    ImageEntry,
)

from conftest import box_mesh


def make_manifest(n_images, split_tags=None, name="cars"):
    images = tuple(
        ImageEntry(
            image_id=f"img_{i:05d}",
            path=f"images/img_{i:05d}.jpg",
            category="sedan",
            split=None if split_tags is None else split_tags[i],
        )
        for i in range(n_images)
    )
    return DatasetManifest(
        name=name,
        images=images,
        categories={"sedan": CategoryEntry(model_id="m1", exact_match=True)},
        models={"m1": "meshes/m1.obj"},
    )


def sample_pose():
    return PoseParams(1.2345678901234, 0.23456789012345, -0.0123456789, 5.678, 842.25, 311.5, 208.75)


class TestAnnotationRecord:
    def test_json_round_trip_lossless(self):
        rec = AnnotationRecord(
            image_id="img_1",
            image_path="a/b.jpg",
            category="sedan",
            model_id="m1",
            pose=sample_pose(),
            status="annotated",
            annotator="ann_7",
            updated_at="2024-05-01T10:00:00+00:00",
            revision=3,
        )
        again = AnnotationRecord.from_json(rec.to_json())
        assert again == rec
        assert again.pose == rec.pose  # bit-exact pose values

    def test_unannotated_needs_no_pose(self):
        rec = AnnotationRecord("i", "p", "c", "m", pose=None)
        assert rec.status == "unannotated"
        assert AnnotationRecord.from_json(rec.to_json()) == rec

    def test_status_requires_pose(self):
        with pytest.raises(dataset.DatasetError):
            AnnotationRecord("i", "p", "c", "m", pose=None, status="annotated")

    def test_unknown_status(self):
        with pytest.raises(dataset.DatasetError):
            AnnotationRecord("i", "p", "c", "m", pose=sample_pose(), status="wip")


class TestTransitions:
    @pytest.mark.parametrize(
        "src,dst,ok",
        [
            ("unannotated", "annotated", True),
            ("annotated", "flagged", True),
            ("flagged", "annotated", True),
            ("annotated", "approved", True),
            ("unannotated", "approved", False),
            ("unannotated", "flagged", False),
            ("approved", "annotated", False),
            ("approved", "flagged", False),
            ("flagged", "approved", False),
        ],
    )
    def test_matrix(self, src, dst, ok):
        assert dataset.can_transition(src, dst) is ok


class TestAnnotationStore:
    def seeded_store(self, tmp_path):
        store = AnnotationStore(tmp_path / "annotations.jsonl")
        store.seed(AnnotationRecord("img_1", "p1.jpg", "sedan", "m1", pose=None))
        return store

    def test_put_increments_revision(self, tmp_path):
        store = self.seeded_store(tmp_path)
        rec = store.put_pose("img_1", sample_pose(), revision=0, annotator="a")
        assert rec.revision == 1
        assert rec.status == "annotated"
        assert store.get("img_1").revision == 1

    def test_stale_revision_rejected(self, tmp_path):
        store = self.seeded_store(tmp_path)
        store.put_pose("img_1", sample_pose(), revision=0)
        with pytest.raises(dataset.StaleRevision):
            store.put_pose("img_1", sample_pose(), revision=0)

    def test_unknown_image(self, tmp_path):
        store = self.seeded_store(tmp_path)
        with pytest.raises(dataset.UnknownImage):
            store.get("nope")

    def test_workflow_to_approved(self, tmp_path):
        store = self.seeded_store(tmp_path)
        store.put_pose("img_1", sample_pose(), revision=0)
        store.set_status("img_1", "flagged")
        store.set_status("img_1", "annotated")
        rec = store.set_status("img_1", "approved")
        assert rec.status == "approved"
        assert rec.revision == 4
        with pytest.raises(dataset.InvalidTransition):
            store.set_status("img_1", "flagged")
        with pytest.raises(dataset.InvalidTransition):
            store.put_pose("img_1", sample_pose(), revision=4)

    def test_pose_save_on_flagged_returns_to_annotated(self, tmp_path):
        store = self.seeded_store(tmp_path)
        store.put_pose("img_1", sample_pose(), revision=0)
        store.set_status("img_1", "flagged")
        rec = store.put_pose("img_1", sample_pose(), revision=2)
        assert rec.status == "annotated"

    def test_persistence_last_revision_wins(self, tmp_path):
        path = tmp_path / "annotations.jsonl"
        store = AnnotationStore(path)
        store.seed(AnnotationRecord("img_1", "p1.jpg", "sedan", "m1", pose=None))
        store.put_pose("img_1", sample_pose(), revision=0)
        p2 = PoseParams(0.5, 0.1, 0.0, 4.0, 700.0, 100.0, 100.0)
        store.put_pose("img_1", p2, revision=1)

        reloaded = AnnotationStore(path)
        rec = reloaded.get("img_1")
        assert rec.revision == 2
        assert rec.pose == p2
        # the log keeps full history
        assert len(path.read_text().splitlines()) == 2

    def test_torn_final_line_dropped(self, tmp_path):
        path = tmp_path / "annotations.jsonl"
        store = AnnotationStore(path)
        store.seed(AnnotationRecord("img_1", "p1.jpg", "sedan", "m1", pose=None))
        store.put_pose("img_1", sample_pose(), revision=0)
        with path.open("a") as fh:
            fh.write('{"image_id": "img_1", "revi')  # crash mid-write
        reloaded = AnnotationStore(path)
        assert reloaded.get("img_1").revision == 1

    def test_concurrent_writes_single_winner(self, tmp_path):
        store = self.seeded_store(tmp_path)
        store.put_pose("img_1", sample_pose(), revision=0)
        outcomes = []

        def writer(k):
            try:
                store.put_pose("img_1", sample_pose(), revision=1, annotator=f"w{k}")
                outcomes.append("ok")
            except dataset.StaleRevision:
                outcomes.append("stale")

        threads = [threading.Thread(target=writer, args=(k,)) for k in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert outcomes.count("ok") == 1
        assert outcomes.count("stale") == 7
        assert store.get("img_1").revision == 2

    def test_list_by_status(self, tmp_path):
        store = AnnotationStore(tmp_path / "a.jsonl")
        for i in range(3):
            store.seed(AnnotationRecord(f"img_{i}", "p", "sedan", "m1", pose=None))
        store.put_pose("img_1", sample_pose(), revision=0)
        assert [r.image_id for r in store.list("annotated")] == ["img_1"]
        assert len(store.list("unannotated")) == 2
        assert len(store.list()) == 3


class TestManifest:
    def test_category_must_have_model(self):
        with pytest.raises(dataset.DatasetError):
            DatasetManifest(
                name="x",
                images=(ImageEntry("i", "p", "suv"),),
                categories={"sedan": CategoryEntry("m1")},
                models={"m1": "m.obj"},
            )

    def test_model_path_must_exist_in_models(self):
        with pytest.raises(dataset.DatasetError):
            DatasetManifest(
                name="x",
                images=(ImageEntry("i", "p", "sedan"),),
                categories={"sedan": CategoryEntry("missing")},
                models={"m1": "m.obj"},
            )

    def test_json_round_trip(self):
        m = make_manifest(3, split_tags=["train", "test", "train"])
        again = DatasetManifest.from_json(m.to_json())
        assert again == m

    def test_exact_match_flag(self):
        m = DatasetManifest(
            name="x",
            images=(ImageEntry("i", "p", "sedan"),),
            categories={"sedan": CategoryEntry("m1", exact_match=False)},
            models={"m1": "m.obj"},
        )
        again = DatasetManifest.from_json(m.to_json())
        assert again.categories["sedan"].exact_match is False


class TestSplitStandard:
    def test_standard_split_counts(self):
        tags = ["train"] * 8144 + ["test"] * 8041
        manifest = make_manifest(16185, split_tags=tags)
        train, test = dataset.split_standard(manifest)
        assert len(train) == 8144
        assert len(test) == 8041

    def test_empty_manifest(self):
        manifest = make_manifest(0, split_tags=[])
        train, test = dataset.split_standard(manifest)
        assert train == [] and test == []

    def test_partition_property(self):
        tags = (["train", "test", "test"] * 10)[:25]
        manifest = make_manifest(25, split_tags=tags)
        train, test = dataset.split_standard(manifest)
        train_ids = {e.image_id for e in train}
        test_ids = {e.image_id for e in test}
        assert train_ids.isdisjoint(test_ids)
        assert train_ids | test_ids == {e.image_id for e in manifest.images}

    def test_missing_tag(self):
        manifest = make_manifest(3)
        with pytest.raises(dataset.MissingSplitTag):
            dataset.split_standard(manifest)


class TestSplitRandom:
    def test_two_thirds_of_5696(self):
        manifest = make_manifest(5696)
        train, test = dataset.split_random(manifest, 2.0 / 3.0, seed=0)
        assert len(train) == 3798
        assert len(test) == 1898

    def test_ceiling_rule_small(self):
        manifest = make_manifest(3)
        train, test = dataset.split_random(manifest, 2.0 / 3.0, seed=5)
        assert len(train) == 2
        assert len(test) == 1

    def test_deterministic(self):
        manifest = make_manifest(100)
        a = dataset.split_random(manifest, 0.5, seed=9)
        b = dataset.split_random(manifest, 0.5, seed=9)
        assert [e.image_id for e in a[0]] == [e.image_id for e in b[0]]

    def test_partition_property(self):
        manifest = make_manifest(101)
        train, test = dataset.split_random(manifest, 0.37, seed=2)
        train_ids = {e.image_id for e in train}
        test_ids = {e.image_id for e in test}
        assert train_ids.isdisjoint(test_ids)
        assert len(train_ids) + len(test_ids) == 101

    def test_bad_fraction(self):
        manifest = make_manifest(10)
        with pytest.raises(ValueError):
            dataset.split_random(manifest, 1.0)


def annotated_record(i, pose):
    return AnnotationRecord(
        image_id=f"img_{i}", image_path="p", category="sedan", model_id="m1",
        pose=pose, status="annotated", revision=1,
    )


class TestPoseHistograms:
    def test_single_bin_when_all_equal(self):
        pose = PoseParams(1.0, 0.2, 0.0, 5.0, 500.0, 0.0, 0.0)
        records = [annotated_record(i, pose) for i in range(7)]
        hists = dataset.pose_histograms(records, bins=24)
        azimuth = hists[0]
        assert azimuth.counts.sum() == 7
        assert (azimuth.counts > 0).sum() == 1

    def test_counts_conserved(self):
        rng = np.random.default_rng(0)
        records = [
            annotated_record(
                i,
                PoseParams(
                    rng.uniform(0, 2 * math.pi), rng.uniform(-1, 1), rng.uniform(-1, 1),
                    5.0, 500.0, 0.0, 0.0,
                ),
            )
            for i in range(250)
        ]
        for hist in dataset.pose_histograms(records, bins=36):
            assert hist.counts.sum() == 250
            assert len(hist.edges) == 37

    def test_uniform_azimuths_near_uniform_bins(self):
        config = field.PoseSamplerConfig()
        rng = np.random.default_rng(1)
        records = [
            annotated_record(i, field.sample_pose(rng, config)) for i in range(20000)
        ]
        azimuth = dataset.pose_histograms(records, bins=18)[0]
        frac = azimuth.counts / 20000
        assert np.all(np.abs(frac - 1 / 18) < 0.01)

    def test_empty_input(self):
        with pytest.raises(dataset.EmptyInput):
            dataset.pose_histograms([])
        unannotated = [AnnotationRecord("i", "p", "sedan", "m1", pose=None)]
        with pytest.raises(dataset.EmptyInput):
            dataset.pose_histograms(unannotated)

    def test_csv_export(self, tmp_path):
        pose = PoseParams(1.0, 0.2, 0.0, 5.0, 500.0, 0.0, 0.0)
        hists = dataset.pose_histograms([annotated_record(0, pose)], bins=8)
        out = tmp_path / "hist.csv"
        dataset.write_histograms_csv(hists, out)
        lines = out.read_text().splitlines()
        assert lines[0] == "angle,bin_start,bin_end,count"
        assert len(lines) == 1 + 3 * 8


class TestValidateRecord:
    def test_clean_record(self):
        m = box_mesh()
        pose = PoseParams(0.4, 0.2, 0.0, 5.0, 500.0, 256.0, 256.0)
        rec = annotated_record(0, pose)
        assert dataset.validate_record(rec, m, (512, 512)) == []

    def test_unannotated_flagged(self):
        rec = AnnotationRecord("i", "p", "sedan", "m1", pose=None)
        findings = dataset.validate_record(rec, box_mesh(), (512, 512))
        assert findings == ["no pose annotated"]

    def test_depth_outside_prior(self):
        pose = PoseParams(0.4, 0.2, 0.0, 5.0, 500.0, 256.0, 256.0)
        rec = annotated_record(0, pose)
        config = dataset.ValidationConfig(depth_prior=(10.0, 20.0))
        findings = dataset.validate_record(rec, box_mesh(), (512, 512), config)
        assert any("depth" in f for f in findings)

    def test_out_of_frame(self):
        pose = PoseParams(0.4, 0.2, 0.0, 5.0, 500.0, 5000.0, 5000.0)
        rec = annotated_record(0, pose)
        findings = dataset.validate_record(rec, box_mesh(), (512, 512))
        assert any("inside the" in f for f in findings)

    def test_behind_camera(self):
        pose = PoseParams(0.0, 0.0, 0.0, 0.4, 500.0, 256.0, 256.0)
        rec = annotated_record(0, pose)
        findings = dataset.validate_record(rec, box_mesh(), (512, 512))
        assert any("behind" in f for f in findings)
