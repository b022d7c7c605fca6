from __future__ import annotations

import csv
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError, InputError
from ..labels import ClassLabel, LabelSpace

SCORE_TOL = 1e-6
BACKBONE_NAMES = ("alexnet", "small_cnn")


@dataclass(frozen=True)
class ClassScores:
    """Normalized per-class score vector aligned with ``label_space``."""

    scores: np.ndarray = field(compare=False)
    label_space: LabelSpace

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.shape != (len(self.label_space),):
            raise InputError(f"score vector of shape {s.shape} does not match {len(self.label_space)} classes")
        if not np.all(np.isfinite(s)) or s.min() < -SCORE_TOL or s.max() > 1 + SCORE_TOL:
            raise InputError(f"scores must lie in [0, 1]: {s}")
        if abs(math.fsum(s) - 1.0) > SCORE_TOL:
            raise InputError(f"scores must sum to 1, got {math.fsum(s)}")
        object.__setattr__(self, "scores", s)

    def __getitem__(self, code) -> float:
        return float(self.scores[self.label_space.index(code)])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ClassScores)
            and self.label_space == other.label_space
            and np.array_equal(self.scores, other.scores)
        )

    @property
    def argmax(self) -> int:
        # np.argmax returns the first maximum: ties go to label-space order
        return int(np.argmax(self.scores))

    @property
    def top_label(self) -> ClassLabel:
        return self.label_space.classes[self.argmax]

    def as_dict(self) -> dict[str, float]:
        return {c: float(v) for c, v in zip(self.label_space.codes, self.scores)}


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class ScorerConfig:
    label_space: LabelSpace
    input_size: tuple[int, int] = (227, 227)
    epochs: int = 20
    learning_rate: float = 1e-6
    optimizer: str = "adam"
    batch_size: int = 32
    pretrained: bool = True
    seed: int = 0
    backbone: str = "alexnet"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if len(self.input_size) != 2 or min(self.input_size) < 32:
            raise ConfigError(f"input_size must be at least (32, 32), got {self.input_size}")
        if self.optimizer != "adam":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.backbone not in BACKBONE_NAMES:
            raise ConfigError(f"unknown backbone {self.backbone!r}; expected one of {BACKBONE_NAMES}")
        if self.pretrained and self.backbone == "small_cnn":
            raise ConfigError("small_cnn has no pretrained weights; set pretrained=false")
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["label_space"] = list(self.label_space.codes)
        d["input_size"] = list(self.input_size)
        return d

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScorerConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown scorer config keys: {sorted(extra)}")
        d = dict(data)
        d["label_space"] = LabelSpace.of(d["label_space"])
        if "input_size" in d:
            d["input_size"] = tuple(d["input_size"])
        return cls(**d)

    def replace(self, **changes) -> "ScorerConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float


@dataclass
class TrainingHistory:
    epochs: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.epochs)

    def append(self, train_loss: float, val_accuracy: float) -> None:
        self.epochs.append(EpochRecord(len(self.epochs) + 1, float(train_loss), float(val_accuracy)))

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_accuracy"])
            for e in self.epochs:
                w.writerow([e.epoch, repr(e.train_loss), repr(e.val_accuracy)])

    @classmethod
    def read_csv(cls, path: str | Path) -> "TrainingHistory":
        h = cls()
        with Path(path).open(newline="") as fh:
            for row in csv.DictReader(fh):
                h.append(float(row["train_loss"]), float(row["val_accuracy"]))
        return h


class ImageScorer(ABC):
    """Anything that maps an RGB image to a :class:`ClassScores`."""

    label_space: LabelSpace
    config: ScorerConfig | None = None
    history: TrainingHistory

    @abstractmethod
    def score(self, pixels: np.ndarray) -> ClassScores: ...

    def score_batch(self, images: Sequence[np.ndarray]) -> list[ClassScores]:
        return [self.score(p) for p in images]
