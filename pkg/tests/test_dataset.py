from collections import Counter

import pytest
from conftest import memory_manifest, write_dataset
from hypothesis import given, settings
from hypothesis import strategies as st

from wound_ensemble.dataset import (
    DatasetManifest,
    FoldPlan,
    ImageRecord,
    ROIRecord,
    SplitAssignment,
    load_manifest,
    make_fold_plan,
    stratified_split,
)
from wound_ensemble.errors import FoldError, ManifestError, StratificationError, ValidationError
from wound_ensemble.labels import LabelSpace, label, parse_codes
from wound_ensemble.rng import derive_seed


def test_labels_and_parsing():
    assert parse_codes("BGNVS") == ["BG", "N", "V", "S"]
    assert parse_codes("S,V") == ["S", "V"]
    assert LabelSpace.subset(["V", "BG", "S"]).codes == ("V", "S", "BG")
    assert LabelSpace.of(["S", "V"]).with_context().codes == ("S", "V", "BG", "N")
    assert derive_seed(3, "a", 1) == derive_seed(3, "a", 1) != derive_seed(3, "a", 2)


def test_load_manifest_counts(tmp_path):
    root = write_dataset(tmp_path, {"D": 100, "V": 100, "P": 100, "S": 100})
    m = load_manifest(root)
    assert len(m.images) == 400
    assert m.class_counts() == {"D": 100, "V": 100, "P": 100, "S": 100}
    assert len(m.rois) == 400


def test_load_manifest_empty_dir(tmp_path):
    (tmp_path / "images").mkdir()
    with pytest.raises(ManifestError, match="no images found"):
        load_manifest(tmp_path)


def test_load_manifest_missing_rois(tmp_path):
    write_dataset(tmp_path, {"S": 2}, rois=False)
    with pytest.raises(ManifestError, match="rois.csv"):
        load_manifest(tmp_path)
    assert len(load_manifest(tmp_path, require_rois=False).images) == 2


def test_unknown_roi_image_id_is_listed(tmp_path):
    root = write_dataset(tmp_path, {"S": 2})
    with (root / "rois.csv").open("a") as fh:
        fh.write("ghost17,0,0,10,10,S\n")
    with pytest.raises(ValidationError, match="ghost17"):
        load_manifest(root)


def test_roi_outside_image_rejected():
    im = ImageRecord("a", label("S"), "", 20, 20)
    with pytest.raises(ValidationError, match="outside"):
        DatasetManifest((im,), (ROIRecord("a-r0", "a", (10, 10, 11, 8), label("S")),))


def test_non_wound_image_label_rejected():
    with pytest.raises(ValidationError):
        ImageRecord("a", label("BG"), "", 20, 20)


def test_manifest_json_round_trip(tmp_path):
    root = write_dataset(tmp_path / "data", {"S": 3, "V": 2})
    m = load_manifest(root)
    m.save(tmp_path / "manifest.json")
    assert DatasetManifest.load(tmp_path / "manifest.json") == m


def test_stratified_split_70_15_15(manifest_100):
    s = stratified_split(manifest_100, (0.70, 0.15, 0.15), seed=42)
    for code in ("D", "V", "P", "S"):
        per = Counter(s.split_of[r.roi_id] for r in manifest_100.rois if r.label.code == code)
        assert per == {"train": 70, "validation": 15, "test": 15}


def test_stratified_split_deterministic(manifest_100):
    a = stratified_split(manifest_100, seed=7)
    b = stratified_split(manifest_100, seed=7)
    c = stratified_split(manifest_100, seed=8)
    assert a.split_of == b.split_of
    assert a.split_of != c.split_of
    assert SplitAssignment.from_dict(a.to_dict()) == a


def test_stratified_split_bad_ratios(manifest_100):
    with pytest.raises(StratificationError, match="ratios must sum to 1"):
        stratified_split(manifest_100, (0.5, 0.5, 0.1))


def test_stratified_split_too_few():
    m = memory_manifest({"S": 2})
    with pytest.raises(StratificationError):
        stratified_split(m, (0.7, 0.15, 0.15))


@settings(max_examples=40, deadline=None)
@given(
    sizes=st.lists(st.integers(3, 40), min_size=1, max_size=4),
    ratios=st.sampled_from([(0.7, 0.15, 0.15), (0.5, 0.25, 0.25), (0.85, 0.15, 0.0), (0.6, 0.2, 0.2)]),
    seed=st.integers(0, 2**31 - 1),
)
def test_split_is_partition_with_near_exact_counts(sizes, ratios, seed):
    codes = ["D", "V", "P", "S"][: len(sizes)]
    m = memory_manifest(dict(zip(codes, sizes)))
    s = stratified_split(m, ratios, seed)
    assert set(s.split_of) == {r.roi_id for r in m.rois}
    for code, n in zip(codes, sizes):
        per = Counter(s.split_of[r.roi_id] for r in m.rois if r.label.code == code)
        for split, ratio in zip(("train", "validation", "test"), ratios):
            if ratio > 0:
                assert per[split] >= 1
                assert abs(per[split] - ratio * n) < 2
            else:
                assert per[split] == 0


def test_fold_plan_disjoint_partition():
    m = memory_manifest({"D": 110, "S": 100, "V": 100, "P": 74})
    plan = make_fold_plan(m, 5, "disjoint", seed=3)
    tests = [set(te) for _, te in plan.rounds]
    assert sum(len(t) for t in tests) == 384
    assert set().union(*tests) == {im.id for im in m.images}
    for i in range(5):
        for j in range(i + 1, 5):
            assert not tests[i] & tests[j]
    for train, test in plan.rounds:
        assert not set(train) & set(test)
        assert len(train) + len(test) == 384
    assert FoldPlan.from_dict(plan.to_dict()) == plan


def test_fold_plan_paper_mode_draws_a_fifth_per_class():
    m = memory_manifest({"D": 110, "S": 50})
    plan = make_fold_plan(m, 5, "paper", seed=1)
    for _, test in plan.rounds:
        per = Counter(t[0] for t in test)
        assert per == {"d": 22, "s": 10}


def test_fold_plan_errors():
    m = memory_manifest({"S": 10, "V": 10})
    with pytest.raises(FoldError):
        make_fold_plan(m, 1)
    with pytest.raises(FoldError):
        make_fold_plan(m, 11)
    with pytest.raises(FoldError):
        make_fold_plan(m, 5, "bootstrap")


def test_fold_plan_deterministic():
    m = memory_manifest({"S": 30, "V": 23})
    assert make_fold_plan(m, 5, seed=9) == make_fold_plan(m, 5, seed=9)
    assert make_fold_plan(m, 5, seed=9) != make_fold_plan(m, 5, seed=10)
