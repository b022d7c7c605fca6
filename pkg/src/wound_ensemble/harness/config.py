"""Experiment configuration, resolved from one JSON file plus CLI overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from ..dataset import normalize_mode
from ..errors import ConfigError, WoundEnsembleError
from ..fusion import FusionTrainConfig
from ..labels import LabelSpace, parse_codes
from ..scorer.base import ScorerConfig

BACKENDS = ("alexnet", "small_cnn", "mock")
STACKING = ("train", "cross_fit")

# full-scale defaults for the trainable scorers
SCORER_DEFAULTS = {
    "input_size": [227, 227],
    "epochs": 20,
    "learning_rate": 1e-6,
    "optimizer": "adam",
    "batch_size": 32,
    "pretrained": True,
}


@dataclass(frozen=True)
class PatchSettings:
    n: int = 17
    coverage: tuple[float, float] = (0.75, 0.85)
    augment: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    task: LabelSpace
    data_root: str = "data"
    out_dir: str = "runs"
    seed: int = 0
    backend: str = "alexnet"
    patch_scorer: Mapping[str, Any] = field(default_factory=dict)
    whole_scorer: Mapping[str, Any] = field(default_factory=dict)
    fusion: FusionTrainConfig = FusionTrainConfig()
    patches: PatchSettings = PatchSettings()
    k: int = 5
    mode: str = "disjoint_stratified"
    val_fraction: float = 0.15
    stacking: str = "train"
    cross_fit_k: int = 3
    test_collection: str = "extra_test"
    mock_rule: str | None = None
    mock_reduce: str = "wound_first"
    mock_noise: float = 0.0
    debug_dumps: bool = True

    def __post_init__(self):
        if len(self.task.wound_classes) != len(self.task) or len(self.task) < 2:
            raise ConfigError(f"task must list >= 2 wound classes, got {self.task.codes}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.stacking not in STACKING:
            raise ConfigError(f"stacking must be one of {STACKING}, got {self.stacking!r}")
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        if not 0 < self.val_fraction < 1:
            raise ConfigError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if not 0 <= self.mock_noise <= 1:
            raise ConfigError(f"mock_noise must be in [0, 1], got {self.mock_noise}")
        try:
            object.__setattr__(self, "mode", normalize_mode(self.mode))
        except WoundEnsembleError as exc:
            raise ConfigError(str(exc)) from None
        # fail early on bad scorer settings
        if self.backend != "mock":
            self.scorer_config("patch", 0)
            self.scorer_config("whole", 0)

    @property
    def patch_label_space(self) -> LabelSpace:
        return self.task.with_context()

    def scorer_config(self, which: str, seed: int) -> ScorerConfig:
        overrides = self.patch_scorer if which == "patch" else self.whole_scorer
        space = self.patch_label_space if which == "patch" else self.task
        merged = {**SCORER_DEFAULTS, **overrides}
        if self.backend == "small_cnn" and "pretrained" not in overrides:
            merged["pretrained"] = False
        merged.update(label_space=list(space.codes), seed=seed, backbone=self.backend)
        try:
            return ScorerConfig.from_dict(merged)
        except TypeError as exc:
            raise ConfigError(f"bad {which}_scorer settings: {exc}") from None

    def mock_rule_path(self) -> Path:
        return Path(self.mock_rule) if self.mock_rule else Path(self.data_root) / "mock_rule.csv"

    def to_dict(self) -> dict:
        return {
            "task": list(self.task.codes),
            "patch_label_space": list(self.patch_label_space.codes),
            "data_root": self.data_root,
            "out_dir": self.out_dir,
            "seed": self.seed,
            "backend": self.backend,
            "patch_scorer": dict(self.patch_scorer),
            "whole_scorer": dict(self.whole_scorer),
            "fusion": self.fusion.to_dict(),
            "patches": {"n": self.patches.n, "coverage": list(self.patches.coverage), "augment": self.patches.augment},
            "k": self.k,
            "mode": self.mode,
            "val_fraction": self.val_fraction,
            "stacking": self.stacking,
            "cross_fit_k": self.cross_fit_k,
            "test_collection": self.test_collection,
            "mock_rule": self.mock_rule,
            "mock_reduce": self.mock_reduce,
            "mock_noise": self.mock_noise,
            "debug_dumps": self.debug_dumps,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentConfig":
        d = dict(data)
        d.pop("patch_label_space", None)
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "task" not in d:
            raise ConfigError("config must name a task, e.g. \"task\": [\"S\", \"V\"]")
        try:
            d["task"] = LabelSpace.of(parse_codes(d["task"]))
            if "fusion" in d:
                d["fusion"] = FusionTrainConfig(**d["fusion"])
            if "patches" in d:
                p = dict(d["patches"])
                if "coverage" in p:
                    p["coverage"] = tuple(p["coverage"])
                d["patches"] = PatchSettings(**p)
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def replace(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def desk_config(task=("S", "V"), **overrides) -> ExperimentConfig:
    """Small-CNN settings that train on one CPU core in minutes."""
    base = dict(
        task=LabelSpace.of(parse_codes(task)),
        backend="small_cnn",
        patch_scorer={"input_size": [32, 32], "epochs": 3, "learning_rate": 3e-3, "batch_size": 64, "pretrained": False},
        whole_scorer={"input_size": [48, 48], "epochs": 25, "learning_rate": 3e-3, "batch_size": 16, "pretrained": False},
        patches=PatchSettings(n=4, augment=True),
        fusion=FusionTrainConfig(epochs=200, learning_rate=1e-3),
    )
    base.update(overrides)
    return ExperimentConfig(**base)
