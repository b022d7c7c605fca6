import json
import math

import numpy as np
import pytest

from wound_ensemble.errors import ConfigError, StageError, UsageError
from wound_ensemble.harness import (
    ExperimentConfig,
    RoundResult,
    SyntheticSpec,
    generate_synthetic,
    run_crossval,
    run_pipeline,
    write_report,
)
from wound_ensemble.harness.pipeline import FAILURE_MARKER, RoundRunner, fold_plan
from wound_ensemble.harness.synthetic import COLORS, mock_rule_for
from wound_ensemble.imaging import load_image
from wound_ensemble.labels import LabelSpace


@pytest.fixture(scope="module")
def syn_sv(tmp_path_factory):
    root = tmp_path_factory.mktemp("syn_sv")
    return generate_synthetic(SyntheticSpec(classes=("S", "V"), images_per_class=20, seed=3,
                                            context_rois=True, extra_test_fraction=0.2), root)


@pytest.fixture(scope="module")
def syn_dsv(tmp_path_factory):
    root = tmp_path_factory.mktemp("syn_dsv")
    return generate_synthetic(SyntheticSpec(classes=3, images_per_class=30, seed=5, context_rois=True), root)


def mock_config(manifest, out, task=("S", "V"), **kw):
    return ExperimentConfig(task=LabelSpace.of(task), data_root=manifest.root, out_dir=str(out),
                            backend="mock", **kw)


def test_synthetic_counts(tmp_path):
    m = generate_synthetic(SyntheticSpec(classes=3, images_per_class=50, seed=0), tmp_path)
    assert len(m.images) == 150 and len(m.rois) == 150
    assert m.class_counts() == {"D": 50, "V": 50, "S": 50}


def test_synthetic_scale_mix(tmp_path):
    m = generate_synthetic(SyntheticSpec(classes=("S",), images_per_class=40, scale_mix=0.5, seed=2), tmp_path)
    lo_hi = mock_rule_for(["S"])["S"]
    small = 0
    for im in m.images:
        px = load_image(im.source_path).astype(int)
        inside = np.ones(px.shape[:2], bool)
        for ch in range(3):
            inside &= (px[..., ch] >= lo_hi[2 * ch]) & (px[..., ch] <= lo_hi[2 * ch + 1])
        small += inside.mean() < 0.10
    assert small == 20


def test_synthetic_deterministic(tmp_path):
    spec = SyntheticSpec(classes=("S", "V"), images_per_class=5, seed=9)
    a = generate_synthetic(spec, tmp_path / "a")
    b = generate_synthetic(spec, tmp_path / "b")
    for x, y in zip(a.images, b.images):
        assert np.array_equal(load_image(x.source_path), load_image(y.source_path))
    assert [r.rect for r in a.rois] == [r.rect for r in b.rois]


def test_synthetic_colours_separable():
    wound = [np.array(COLORS[c]) for c in ("D", "V", "P", "S")]
    gaps = [np.abs(p - q).max() for i, p in enumerate(wound) for q in wound[i + 1:]]
    assert min(gaps) > 2 * 24


def test_synthetic_rejects_bad_spec(tmp_path):
    with pytest.raises(ConfigError):
        generate_synthetic(SyntheticSpec(classes=("BG",)), tmp_path)
    with pytest.raises(ConfigError):
        generate_synthetic(SyntheticSpec(image_size=(32, 32)), tmp_path)


def test_config_patch_space_and_round_trip(tmp_path):
    cfg = ExperimentConfig(task=LabelSpace.of(["S", "V"]), mode="paper")
    assert cfg.patch_label_space.codes == ("S", "V", "BG", "N")
    assert cfg.mode == "paper_random_resample"
    cfg.save(tmp_path / "c.json")
    assert ExperimentConfig.load(tmp_path / "c.json") == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"task": ["S", "V"], "colour": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig(task=LabelSpace.of(["S", "BG"]))
    with pytest.raises(ConfigError):
        ExperimentConfig(task=LabelSpace.of(["S", "V"]), backend="small_cnn",
                         patch_scorer={"pretrained": True})


def test_pipeline_with_perfect_mock(syn_sv, tmp_path):
    artifacts, result = run_pipeline(mock_config(syn_sv, tmp_path))
    assert result.headline("ensemble")["accuracy"] == 1.0
    assert result.headline("A")["accuracy"] == 1.0
    extra = sorted(im.id for im in syn_sv.images if im.collection == "extra_test")
    assert result.test_ids == extra
    assert set(result.classifiers) == {"A", "B", "ensemble"}
    for clf in result.classifiers.values():
        assert len(clf.predictions) == len(result.test_ids)
    d = artifacts.directory
    for name in ("round.json", "split.json", "fusion_head.json", "result.json"):
        assert (d / name).exists()
    assert len(list((d / "debug").glob("*.json"))) == len(extra)
    saved = json.loads((d / "result.json").read_text())
    assert saved["config"]["task"] == ["S", "V"] and set(saved["seeds"]) >= {"split", "fusion"}


def test_pipeline_missing_rois(tmp_path, syn_sv):
    root = tmp_path / "data"
    (root / "images").mkdir(parents=True)
    src = syn_sv.images[0]
    (root / "images" / "S").mkdir()
    (root / "images" / "S" / "x.png").write_bytes(open(src.source_path, "rb").read())
    cfg = mock_config(syn_sv, tmp_path / "out").replace(data_root=str(root))
    with pytest.raises(StageError) as err:
        run_pipeline(cfg)
    assert err.value.stage == "prepare"
    assert str(root / "rois.csv") in str(err.value)
    assert err.value.exit_code == 3


def test_stage_failure_leaves_marker(syn_sv, tmp_path):
    cfg = mock_config(syn_sv, tmp_path, mock_rule=str(tmp_path / "nope.csv"))
    with pytest.raises(StageError) as err:
        run_pipeline(cfg)
    assert err.value.stage == "train-patch" and err.value.exit_code == 2
    marker = (tmp_path / "pipeline" / FAILURE_MARKER).read_text()
    assert marker.startswith("stage: train-patch")
    assert (tmp_path / "pipeline" / "split.json").exists()


def test_crossval_noisy_mock(tmp_path):
    m = generate_synthetic(SyntheticSpec(classes=3, images_per_class=60, seed=5, context_rois=True),
                           tmp_path / "data")
    cfg = mock_config(m, tmp_path, task=("D", "S", "V"), mock_noise=0.1)
    results, summary = run_crossval(cfg, 5)
    tests = [set(r.test_ids) for r in results]
    assert set().union(*tests) == {im.id for im in m.images}
    assert sum(map(len, tests)) == len(m.images)
    mean = {c: summary["mean"][c]["accuracy"] for c in ("A", "B", "ensemble")}
    assert mean["ensemble"] >= max(mean["A"], mean["B"]) - 0.02
    # summary arithmetic is an exact recomputation
    for clf in ("A", "B", "ensemble"):
        accs = [r.headline(clf)["accuracy"] for r in results]
        assert summary["mean"][clf]["accuracy"] == math.fsum(accs) / len(accs)
        assert summary["max"][clf]["accuracy"] == max(accs)
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["k"] == 5 and on_disk["mode"] == "disjoint_stratified"
    assert on_disk["config"]["mock_noise"] == 0.1


def test_round_isolation(syn_dsv, tmp_path):
    cfg = mock_config(syn_dsv, tmp_path / "all", task=("D", "S", "V"), mock_noise=0.1)
    run_crossval(cfg, 5)
    solo = cfg.replace(out_dir=str(tmp_path / "solo"))
    run_crossval(solo, 5, rounds=[3])
    a = (tmp_path / "all" / "round_3" / "result.json").read_text()
    b = (tmp_path / "solo" / "round_3" / "result.json").read_text()
    assert json.loads(a)["classifiers"] == json.loads(b)["classifiers"]
    assert json.loads(a)["test_ids"] == json.loads(b)["test_ids"]


def test_runner_rejects_overlap(syn_sv, tmp_path):
    ids = [im.id for im in syn_sv.images]
    with pytest.raises(Exception, match="overlap"):
        RoundRunner(mock_config(syn_sv, tmp_path), syn_sv, ids[:10], ids[5:15], 1, tmp_path)


def test_paper_mode_fold_plan(syn_dsv, tmp_path):
    plan = fold_plan(mock_config(syn_dsv, tmp_path, task=("D", "S", "V"), mode="paper"), syn_dsv)
    for _, test in plan.rounds:
        assert len(test) == 18  # 6 of 30 per class


@pytest.fixture(scope="module")
def binary_results(syn_sv, tmp_path_factory):
    out = tmp_path_factory.mktemp("cv_sv")
    results, _ = run_crossval(mock_config(syn_sv, out, mock_noise=0.1), 5)
    return results


def test_report_outputs(binary_results, tmp_path):
    written = write_report(binary_results, tmp_path)
    names = {p.name for p in written}
    assert {f"roc_R{i}.png" for i in range(1, 6)} <= names
    assert {"metrics.json", "metrics.csv", "per_class.csv", "accuracy_bars.png", "auc_bars.png"} <= names
    payload = json.loads((tmp_path / "metrics.json").read_text())
    for r, saved in zip(binary_results, payload["rounds"]):
        for clf in ("A", "B", "ensemble"):
            assert saved["classifiers"][clf]["headline"] == r.headline(clf)
            assert saved["classifiers"][clf]["report"] == r.classifiers[clf].report.to_dict()


def test_result_json_round_trip(binary_results, tmp_path):
    r = binary_results[0]
    r.save(tmp_path / "r.json")
    back = RoundResult.load(tmp_path / "r.json")
    assert back.to_dict() == r.to_dict()


def test_report_errors(binary_results, tmp_path):
    with pytest.raises(UsageError):
        write_report([], tmp_path)
    with pytest.raises(UsageError):
        write_report(binary_results, tmp_path, fmt="xlsx")
