"""Experiment lifecycle: prepare -> train patch scorer -> train whole-image
scorer -> train fusion head -> evaluate, for one round or k cross-validation
rounds.

Every round draws its seeds from ``derive_seed(master, "round", i, stage)``
and writes only below its own ``round_<i>/`` directory, so any round can be
re-run alone and reproduce its result.
"""

from __future__ import annotations

import json
import logging
import math
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..dataset import DatasetManifest, FoldPlan, SplitAssignment, load_manifest, make_fold_plan, stratified_split
from ..errors import (
    DataError,
    EvaluationError,
    StageError,
    TrainingError,
    WoundEnsembleError,
)
from ..fusion import FusionFeature, MLPHead, build_feature, predict, train_mlp
from ..labels import LabelSpace
from ..metrics import ConfusionMatrix, MetricsReport, ROCCurve, confusion, report, roc_auc
from ..patchgen import build_patch_dataset
from ..rng import derive_seed
from ..scorer import ImageScorer, MockScorer, NoisyScorer, fine_tune, load_scorer, read_mock_rule, save_scorer
from ..slidewin import classify_image, debug_record, write_debug_dump
from .config import ExperimentConfig

log = logging.getLogger(__name__)

CLASSIFIERS = ("A", "B", "ensemble")
STAGE_EXIT = {"prepare": DataError, "train-patch": TrainingError, "train-whole": TrainingError,
              "train-fusion": TrainingError, "eval": EvaluationError}
FAILURE_MARKER = "FAILED"
ROUND_FILE = "round.json"


@dataclass
class ClassifierResult:
    predictions: list[str]
    confusion: ConfusionMatrix
    report: MetricsReport
    roc: ROCCurve | None = None
    positive_scores: list[float] | None = None

    def to_dict(self) -> dict:
        return {
            "predictions": self.predictions,
            "confusion": self.confusion.to_dict(),
            "report": self.report.to_dict(),
            "roc": self.roc.to_dict() if self.roc else None,
            "positive_scores": self.positive_scores,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierResult":
        cm = ConfusionMatrix(np.asarray(d["confusion"]["counts"]), LabelSpace.of(d["confusion"]["labels"]))
        return cls(d["predictions"], cm, MetricsReport.from_dict(d["report"]),
                   ROCCurve.from_dict(d["roc"]) if d.get("roc") else None, d.get("positive_scores"))


@dataclass
class RoundResult:
    round_index: int
    task: LabelSpace
    test_ids: list[str]
    actuals: list[str]
    classifiers: dict[str, ClassifierResult]
    seeds: dict[str, int] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def binary(self) -> bool:
        return len(self.task) == 2

    @property
    def test_counts(self) -> dict[str, int]:
        return {c: self.actuals.count(c) for c in self.task.codes}

    def headline(self, clf: str) -> dict[str, float]:
        """Accuracy plus P/R/F1 of the first task class (binary) or macro averages; AUC if binary."""
        r = self.classifiers[clf].report
        if self.binary:
            pos = r.per_class[self.task.codes[0]]
            out = {"accuracy": r.accuracy, "precision": pos.precision, "recall": pos.recall, "f1": pos.f1}
            out["auc"] = self.classifiers[clf].roc.auc
        else:
            out = {"accuracy": r.accuracy, "precision": r.macro_precision, "recall": r.macro_recall, "f1": r.macro_f1}
        return out

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "task": list(self.task.codes),
            "test_ids": self.test_ids,
            "actuals": self.actuals,
            "test_counts": self.test_counts,
            "seeds": self.seeds,
            "classifiers": {k: v.to_dict() for k, v in self.classifiers.items()},
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundResult":
        return cls(d["round"], LabelSpace.of(d["task"]), d["test_ids"], d["actuals"],
                   {k: ClassifierResult.from_dict(v) for k, v in d["classifiers"].items()},
                   d.get("seeds", {}), d.get("config", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "RoundResult":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class RoundArtifacts:
    directory: Path
    patch_scorer: ImageScorer
    whole_scorer: ImageScorer
    head: MLPHead


def round_seeds(master: int, round_index: int) -> dict[str, int]:
    stages = ("split", "patches", "patch_scorer", "whole_scorer", "fusion", "cross_fit")
    return {s: derive_seed(master, "round", round_index, s) % (2**31) for s in stages}


class RoundRunner:
    """Runs the stages of one train/test round; stages can also be invoked one by one."""

    def __init__(self, config: ExperimentConfig, manifest: DatasetManifest, train_ids: Sequence[str],
                 test_ids: Sequence[str], round_index: int, directory: str | Path):
        self.config = config
        self.manifest = manifest
        self.train_ids = sorted(train_ids)
        self.test_ids = sorted(test_ids)
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise DataError(f"train and test sets overlap: {sorted(overlap)[:5]}")
        self.round_index = round_index
        self.dir = Path(directory)
        self.seeds = round_seeds(config.seed, round_index)
        self.task = config.task
        self._images = manifest.image_map()
        self._pixels: dict[str, np.ndarray] = {}

    def pixels(self, image_id: str) -> np.ndarray:
        if image_id not in self._pixels:
            self._pixels[image_id] = self._images[image_id].get_pixels()
        return self._pixels[image_id]

    def label_of(self, image_id: str) -> str:
        return self._images[image_id].label.code

    def stage(self, name: str, fn: Callable, *args):
        log.info("round %d: %s", self.round_index, name)
        try:
            return fn(*args)
        except Exception as exc:
            self.dir.mkdir(parents=True, exist_ok=True)
            (self.dir / FAILURE_MARKER).write_text(
                f"stage: {name}\ncause: {exc}\n\n{traceback.format_exc()}"
            )
            if not isinstance(exc, WoundEnsembleError):
                exc = STAGE_EXIT[name](f"{type(exc).__name__}: {exc}")
            raise StageError(name, exc) from exc

    # -- stages ----------------------------------------------------------

    def prepare(self) -> SplitAssignment:
        unknown = [i for i in self.train_ids + self.test_ids if i not in self._images]
        if unknown:
            raise DataError(f"unknown image ids: {unknown[:5]}")
        missing = [c for c in self.task.codes if not any(self.label_of(i) == c for i in self.train_ids)]
        if missing:
            raise DataError(f"training set has no images of classes {missing}")
        vf = self.config.val_fraction
        split = stratified_split(self.manifest, (1 - vf, vf, 0.0), self.seeds["split"], unit="image",
                                 ids=[i for i in self.train_ids if self.label_of(i) in self.task])
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / ROUND_FILE).write_text(json.dumps(
            {"round": self.round_index, "train_ids": self.train_ids, "test_ids": self.test_ids}, indent=1))
        (self.dir / "split.json").write_text(json.dumps(split.to_dict(), indent=1))
        return split

    def load_split(self) -> SplitAssignment:
        path = self.dir / "split.json"
        try:
            return SplitAssignment.from_dict(json.loads(path.read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read {path}; run the prepare stage first") from exc

    @classmethod
    def reopen(cls, config: ExperimentConfig, manifest: DatasetManifest, directory: str | Path) -> "RoundRunner":
        """A runner for a round directory written earlier by ``prepare``."""
        path = Path(directory) / ROUND_FILE
        try:
            d = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read {path}; run the prepare stage first") from exc
        return cls(config, manifest, d["train_ids"], d["test_ids"], d["round"], directory)

    def _seed(self, key: str) -> int:
        return self.seeds[key] if key in self.seeds else derive_seed(self.config.seed, "round", self.round_index, key) % 2**31

    def _mock(self, space: LabelSpace, which: str) -> ImageScorer:
        scorer = MockScorer(space, read_mock_rule(self.config.mock_rule_path()), self.config.mock_reduce)
        if self.config.mock_noise > 0:
            scorer = NoisyScorer(scorer, self.config.mock_noise, derive_seed(self.config.seed, "noise", which))
        return scorer

    def fit_patch_scorer(self, split: SplitAssignment, seed_key: str = "patch_scorer") -> ImageScorer:
        if self.config.backend == "mock":
            return self._mock(self.config.patch_label_space, "patch")
        p = self.config.patches
        ds = build_patch_dataset(self.manifest, split, self.config.patch_label_space, self.seeds["patches"],
                                 p.n, p.coverage, p.augment,
                                 images={i: self.pixels(i) for i in split.split_of})
        log.info("patch dataset: %d train / %d validation", ds.count("train"), ds.count("validation"))
        cfg = self.config.scorer_config("patch", self._seed(seed_key))
        return fine_tune(cfg, ds.splits["train"], ds.splits["validation"], log=log.debug)

    def fit_whole_scorer(self, split: SplitAssignment, seed_key: str = "whole_scorer") -> ImageScorer:
        if self.config.backend == "mock":
            return self._mock(self.task, "whole")
        train = [(self.pixels(i), self.label_of(i)) for i in split.ids_in("train")]
        val = [(self.pixels(i), self.label_of(i)) for i in split.ids_in("validation")]
        cfg = self.config.scorer_config("whole", self._seed(seed_key))
        return fine_tune(cfg, train, val, log=log.debug)

    def train_patch(self, split: SplitAssignment) -> ImageScorer:
        scorer = self.fit_patch_scorer(split)
        save_scorer(scorer, self.dir / "patch_scorer")
        return scorer

    def train_whole(self, split: SplitAssignment) -> ImageScorer:
        scorer = self.fit_whole_scorer(split)
        save_scorer(scorer, self.dir / "whole_scorer")
        return scorer

    def features(self, ids: Sequence[str], a: ImageScorer, b: ImageScorer, dump: Path | None = None):
        feats, outputs = [], []
        for i in ids:
            px = self.pixels(i)
            sa = a.score(px)
            spec, ob = classify_image(b, px, self.task)
            feats.append(build_feature(sa, ob))
            outputs.append((sa, ob))
            if dump is not None:
                write_debug_dump(debug_record(i, spec, ob), dump)
        return feats, outputs

    def _cross_fit_features(self) -> tuple[list[FusionFeature], list[str]]:
        inner = make_fold_plan(self.manifest, self.config.cross_fit_k, "disjoint_stratified",
                               self.seeds["cross_fit"], unit="image", ids=self.train_ids)
        feats, labels = [], []
        vf = self.config.val_fraction
        for j, (tr, te) in enumerate(inner.rounds):
            split = stratified_split(self.manifest, (1 - vf, vf, 0.0), self.seeds["split"], unit="image", ids=tr)
            a = self.fit_whole_scorer(split, f"cross_fit-{j}-whole")
            b = self.fit_patch_scorer(split, f"cross_fit-{j}-patch")
            f, _ = self.features(te, a, b)
            feats.extend(f)
            labels.extend(self.label_of(i) for i in te)
        return feats, labels

    def train_fusion(self, a: ImageScorer, b: ImageScorer) -> MLPHead:
        if self.config.stacking == "cross_fit":
            feats, labels = self._cross_fit_features()
        else:
            feats, _ = self.features(self.train_ids, a, b)
            labels = [self.label_of(i) for i in self.train_ids]
        cfg = self.config.fusion
        head = train_mlp(feats, labels, type(cfg)(**{**cfg.to_dict(), "seed": self.seeds["fusion"]}), self.task)
        head.save(self.dir / "fusion_head.json")
        return head

    def evaluate(self, a: ImageScorer, b: ImageScorer, head: MLPHead) -> RoundResult:
        if not self.test_ids:
            raise EvaluationError("test set is empty")
        dump = self.dir / "debug" if self.config.debug_dumps else None
        feats, outputs = self.features(self.test_ids, a, b, dump)
        actuals = [self.label_of(i) for i in self.test_ids]
        ens = [predict(head, f) for f in feats]
        preds = {
            "A": [sa.top_label.code for sa, _ in outputs],
            "B": [ob.voted_label.code for _, ob in outputs],
            "ensemble": [e.top_label.code for e in ens],
        }
        pos = self.task.codes[0]
        scores = {
            "A": [sa[pos] for sa, _ in outputs],
            "B": [ob.as_scores()[pos] for _, ob in outputs],
            "ensemble": [e[pos] for e in ens],
        }
        results = {}
        for clf in CLASSIFIERS:
            cm = confusion(preds[clf], actuals, self.task)
            roc = None
            if len(self.task) == 2 and len(set(actuals)) == 2:
                roc = roc_auc(scores[clf], [a_ == pos for a_ in actuals])
            results[clf] = ClassifierResult(preds[clf], cm, report(cm), roc, scores[clf])
        rr = RoundResult(self.round_index, self.task, list(self.test_ids), actuals, results,
                         dict(self.seeds), self.config.to_dict())
        rr.save(self.dir / "result.json")
        return rr

    def run(self) -> tuple[RoundArtifacts, RoundResult]:
        marker = self.dir / FAILURE_MARKER
        if marker.exists():
            marker.unlink()
        split = self.stage("prepare", self.prepare)
        b = self.stage("train-patch", self.train_patch, split)
        a = self.stage("train-whole", self.train_whole, split)
        head = self.stage("train-fusion", self.train_fusion, a, b)
        result = self.stage("eval", self.evaluate, a, b, head)
        return RoundArtifacts(self.dir, b, a, head), result


def load_round_artifacts(directory: str | Path) -> tuple[ImageScorer, ImageScorer, MLPHead]:
    d = Path(directory)
    return load_scorer(d / "patch_scorer"), load_scorer(d / "whole_scorer"), MLPHead.load(d / "fusion_head.json")


def resolve_manifest(config: ExperimentConfig, manifest: DatasetManifest | None) -> DatasetManifest:
    if manifest is not None:
        return manifest
    try:
        return load_manifest(config.data_root)
    except WoundEnsembleError as exc:
        raise StageError("prepare", exc) from exc


def task_image_ids(config: ExperimentConfig, manifest: DatasetManifest, collection: str | None = None) -> list[str]:
    return [im.id for im in manifest.images
            if im.label in config.task and (collection is None or im.collection == collection)]


def fixed_test_split(config: ExperimentConfig, manifest: DatasetManifest) -> tuple[list[str], list[str]]:
    """Training/test ids for a single run: the test collection if present, else a 15% stratified hold-out."""
    test = task_image_ids(config, manifest, config.test_collection)
    if test:
        train = [i for i in task_image_ids(config, manifest) if i not in set(test)]
        return train, test
    split = stratified_split(manifest, (0.85, 0.0, 0.15), derive_seed(config.seed, "holdout") % 2**31,
                             unit="image", ids=task_image_ids(config, manifest))
    return split.ids_in("train"), split.ids_in("test")


def run_pipeline(config: ExperimentConfig, manifest: DatasetManifest | None = None) -> tuple[RoundArtifacts, RoundResult]:
    manifest = resolve_manifest(config, manifest)
    train, test = fixed_test_split(config, manifest)
    runner = RoundRunner(config, manifest, train, test, 0, Path(config.out_dir) / "pipeline")
    return runner.run()


def summarize(results: Sequence[RoundResult], config: ExperimentConfig, plan: FoldPlan | None = None) -> dict:
    per_round = []
    for r in results:
        per_round.append({"round": r.round_index, "test_counts": r.test_counts, "seeds": r.seeds,
                          **{clf: r.headline(clf) for clf in CLASSIFIERS}})
    mean, best = {}, {}
    for clf in CLASSIFIERS:
        metrics = per_round[0][clf].keys()
        mean[clf] = {m: math.fsum(pr[clf][m] for pr in per_round) / len(per_round) for m in metrics}
        best[clf] = {m: max(pr[clf][m] for pr in per_round) for m in metrics}
    return {
        "task": list(config.task.codes),
        "k": plan.k if plan else len(results),
        "mode": plan.mode if plan else config.mode,
        "seed": config.seed,
        "per_round": per_round,
        "mean": mean,
        "max": best,
        "config": config.to_dict(),
    }


def fold_plan(config: ExperimentConfig, manifest: DatasetManifest, k: int | None = None) -> FoldPlan:
    """Folds over the pooled task images (all collections merged)."""
    try:
        return make_fold_plan(manifest, k or config.k, config.mode, derive_seed(config.seed, "folds") % 2**31,
                              unit="image", ids=task_image_ids(config, manifest))
    except WoundEnsembleError as exc:
        raise StageError("prepare", exc) from exc


def run_crossval(config: ExperimentConfig, k: int | None = None, manifest: DatasetManifest | None = None,
                 rounds: Sequence[int] | None = None) -> tuple[list[RoundResult], dict]:
    """k-fold evaluation; ``rounds`` (1-based) restricts which rounds run."""
    manifest = resolve_manifest(config, manifest)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan = fold_plan(config, manifest, k)
    (out / "foldplan.json").write_text(json.dumps(plan.to_dict(), indent=1))
    results = []
    for i, (train, test) in enumerate(plan.rounds, start=1):
        if rounds is not None and i not in rounds:
            continue
        runner = RoundRunner(config, manifest, train, test, i, out / f"round_{i}")
        results.append(runner.run()[1])
    summary = summarize(results, config, plan)
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return results, summary
