"""Deterministic colour-rule scorer for desk-scale pipeline runs.

A rule maps each class code to an RGB box ``(r_lo, r_hi, g_lo, g_hi, b_lo,
b_hi)``, inclusive. The matched class gets score 0.9 and the remaining 0.1
is spread uniformly. With ``reduce="mean"`` the image's mean colour picks the
box (nearest box when it falls in none); with ``reduce="majority"`` the box
holding the most pixels wins, falling back to the mean rule when no pixel
lands in any box. ``reduce="wound_first"`` is majority restricted to wound
classes whenever they hold at least ``WOUND_SHARE`` of the pixels, so a
window showing a small wound on skin scores as that wound.
"""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import ConfigError
from ..imaging import as_rgb
from ..labels import LabelSpace, label
from ..rng import derive_seed
from .base import ClassScores, ImageScorer, TrainingHistory

MATCH_SCORE = 0.9
WOUND_SHARE = 0.05
REDUCERS = ("mean", "majority", "wound_first")
RULE_HEADER = ["class_code", "r_lo", "r_hi", "g_lo", "g_hi", "b_lo", "b_hi"]
Box = tuple[int, int, int, int, int, int]


def one_hot_ish(index: int, n: int) -> np.ndarray:
    if n == 1:
        return np.ones(1)
    s = np.full(n, (1.0 - MATCH_SCORE) / (n - 1))
    s[index] = MATCH_SCORE
    return s


class MockScorer(ImageScorer):
    def __init__(self, label_space: LabelSpace, rule: Mapping[str, Box], reduce: str = "mean"):
        if reduce not in REDUCERS:
            raise ConfigError(f"reduce must be one of {REDUCERS}, got {reduce!r}")
        rule = {label(c).code: tuple(int(v) for v in box) for c, box in rule.items()}
        missing = [c for c in label_space.codes if c not in rule]
        if missing:
            raise ConfigError(f"mock rule has no colour cell for classes {missing}")
        self.label_space = label_space
        self.reduce = reduce
        self.rule = {c: rule[c] for c in label_space.codes}
        self._lo = np.array([[b[0], b[2], b[4]] for b in self.rule.values()], dtype=np.float64)
        self._hi = np.array([[b[1], b[3], b[5]] for b in self.rule.values()], dtype=np.float64)
        self._wound = np.array([not c.non_wound for c in label_space.classes])
        self.history = TrainingHistory()

    def _by_mean(self, px: np.ndarray) -> int:
        mean = px.reshape(-1, 3).mean(axis=0)
        # distance from the mean colour to each box (0 inside)
        gap = np.maximum(self._lo - mean, 0) + np.maximum(mean - self._hi, 0)
        return int(np.argmin(np.sqrt((gap**2).sum(axis=1))))

    def _counts(self, px: np.ndarray) -> np.ndarray:
        flat = px.reshape(-1, 1, 3).astype(np.float64)
        inside = np.all((flat >= self._lo) & (flat <= self._hi), axis=2)
        # a pixel in overlapping boxes counts for the first class only
        first = np.argmax(inside, axis=1)[inside.any(axis=1)]
        return np.bincount(first, minlength=len(self.label_space))

    def predict_index(self, pixels: np.ndarray) -> int:
        px = as_rgb(pixels)
        if self.reduce != "mean":
            counts = self._counts(px)
            if self.reduce == "wound_first" and self._wound.any():
                wound = np.where(self._wound, counts, 0)
                if wound.sum() >= WOUND_SHARE * px.shape[0] * px.shape[1]:
                    return int(np.argmax(wound))
            if counts.any():
                return int(np.argmax(counts))
        return self._by_mean(px)

    def score(self, pixels: np.ndarray) -> ClassScores:
        return ClassScores(one_hot_ish(self.predict_index(pixels), len(self.label_space)), self.label_space)


def make_mock_scorer(label_space: LabelSpace, rule: Mapping[str, Box], reduce: str = "mean") -> MockScorer:
    return MockScorer(label_space, rule, reduce)


class NoisyScorer(ImageScorer):
    """Wraps a scorer and, for a fixed fraction of inputs, moves the top score to another class.

    Whether an input is corrupted, and which class it is moved to, is a
    function of the pixel bytes and the seed only.
    """

    def __init__(self, base: ImageScorer, rate: float, seed: int = 0):
        if not 0 <= rate <= 1:
            raise ConfigError(f"noise rate must be in [0, 1], got {rate}")
        self.base = base
        self.rate = rate
        self.seed = seed
        self.label_space = base.label_space
        self.config = base.config
        self.history = base.history

    def score(self, pixels: np.ndarray) -> ClassScores:
        out = self.base.score(pixels)
        n = len(self.label_space)
        if n < 2 or self.rate == 0:
            return out
        px = as_rgb(pixels)
        digest = hashlib.blake2b(px.tobytes() + repr(px.shape).encode(), digest_size=8).hexdigest()
        rng = np.random.default_rng(derive_seed(self.seed, "noise", digest))
        if rng.random() >= self.rate:
            return out
        top = out.argmax
        other = (top + 1 + int(rng.integers(0, n - 1))) % n
        s = out.scores.copy()
        s[top], s[other] = s[other], s[top]
        return ClassScores(s, self.label_space)


def read_mock_rule(path: str | Path) -> dict[str, Box]:
    path = Path(path)
    rule = {}
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != RULE_HEADER:
                raise ConfigError(f"{path}: header must be {','.join(RULE_HEADER)}")
            for row in reader:
                rule[label(row["class_code"]).code] = tuple(int(row[k]) for k in RULE_HEADER[1:])
    except OSError as exc:
        raise ConfigError(f"cannot read mock rule {path}: {exc}") from exc
    return rule


def write_mock_rule(rule: Mapping[str, Box], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RULE_HEADER)
        for code, box in rule.items():
            w.writerow([code, *box])
