"""Sliding-window classifier: 3x3 grid of equal windows, patch scoring, voting.

Window geometry: ``h`` is the smallest value >= ceil(H/2) for which ``H - h``
is even, and the row stride is ``(H - h) / 2``; likewise for columns. This
gives three equal, roughly half-overlapping windows per axis with
``2 * stride + h == H`` exactly, so the grid covers every pixel.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import ImageRecord
from .errors import ConfigError, InputError
from .labels import ClassLabel, LabelSpace, master_rank
from .patchgen import PatchRecord
from .scorer.base import ClassScores, ImageScorer

GRID = 3
MIN_SIDE = 16


@dataclass(frozen=True)
class GridSpec:
    height: int
    width: int
    window: tuple[int, int]  # (h, w)
    stride: tuple[int, int]  # (sy, sx)
    rows: int = GRID
    cols: int = GRID

    def origins(self) -> list[tuple[int, int]]:
        """(y, x) of each window, row-major."""
        sy, sx = self.stride
        return [(r * sy, c * sx) for r in range(self.rows) for c in range(self.cols)]

    def rects(self) -> list[tuple[int, int, int, int]]:
        h, w = self.window
        return [(x, y, w, h) for y, x in self.origins()]


def _axis(n: int) -> tuple[int, int]:
    win = math.ceil(n / 2)
    if (n - win) % 2:
        win += 1
    return win, (n - win) // 2


def grid_spec(height: int, width: int) -> GridSpec:
    if height < MIN_SIDE or width < MIN_SIDE:
        raise InputError(f"image {width}x{height} is smaller than the {MIN_SIDE}x{MIN_SIDE} minimum")
    h, sy = _axis(height)
    w, sx = _axis(width)
    return GridSpec(height, width, (h, w), (sy, sx))


def grid_patches(image: ImageRecord | np.ndarray, source_id: str | None = None) -> tuple[GridSpec, list[PatchRecord]]:
    if isinstance(image, ImageRecord):
        pixels, source_id, lab = image.get_pixels(), image.id, image.label
    else:
        pixels, lab = np.asarray(image), None
        source_id = source_id or "image"
    if pixels.ndim < 2:
        raise InputError(f"invalid image shape {pixels.shape}")
    spec = grid_spec(pixels.shape[0], pixels.shape[1])
    patches = [
        PatchRecord(pixels[y : y + h, x : x + w], lab, "image_grid", source_id, (x, y, w, h), "identity", i)
        for i, (x, y, w, h) in enumerate(spec.rects())
    ]
    return spec, patches


@dataclass(frozen=True)
class PatchVerdict:
    patch_index: int
    scores: ClassScores
    is_wound: bool

    @property
    def label(self) -> ClassLabel:
        return self.scores.top_label


def classify_patches(scorer: ImageScorer, patches: Sequence[PatchRecord], wound_space: LabelSpace | None = None) -> list[PatchVerdict]:
    space = scorer.label_space
    if "BG" not in space or "N" not in space or not space.wound_classes:
        raise ConfigError(f"patch scorer label space {space.codes} must contain BG, N and a wound class")
    if wound_space is not None:
        missing = [c for c in wound_space.codes if c not in space]
        if missing:
            raise ConfigError(f"patch scorer label space {space.codes} lacks task classes {missing}")
    verdicts = []
    for i, p in enumerate(patches):
        s = scorer.score(p.pixels)
        verdicts.append(PatchVerdict(p.index if p.index is not None else i, s, not s.top_label.non_wound))
    return verdicts


@dataclass(frozen=True)
class ClassifierBOutput:
    verdicts: tuple[PatchVerdict, ...]
    voted_label: ClassLabel
    avg_wound_scores: np.ndarray
    fallback_used: bool
    wound_space: LabelSpace

    def as_scores(self) -> ClassScores:
        """Averaged wound scores renormalized to a distribution (for ROC curves)."""
        s = np.asarray(self.avg_wound_scores, dtype=np.float64)
        total = math.fsum(s)
        s = s / total if total > 0 else np.full(len(s), 1 / len(s))
        return ClassScores(s, self.wound_space)


def _fmean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def aggregate(verdicts: Sequence[PatchVerdict], wound_space: LabelSpace) -> ClassifierBOutput:
    """Majority vote over wound-detected patches plus averaged wound-class scores.

    Ties in the vote go to the higher averaged score, then to master label
    order. With no wound-detected patch, the wound-class entries of all
    patches are averaged, renormalized, and ``fallback_used`` is set.
    Sums use ``math.fsum`` so the result does not depend on verdict order.
    """
    if len(verdicts) != GRID * GRID:
        raise InputError(f"expected {GRID * GRID} verdicts, got {len(verdicts)}")
    codes = wound_space.codes

    def wound_entries(v: PatchVerdict) -> list[float]:
        return [v.scores[c] for c in codes]

    wound = [v for v in verdicts if v.is_wound]
    for v in wound:
        if v.label.code not in codes:
            raise ConfigError(f"patch {v.patch_index} voted {v.label.code}, outside task classes {codes}")

    if wound:
        cols = list(zip(*(wound_entries(v) for v in wound)))
        avg = np.array([_fmean(col) for col in cols])
        votes = Counter(v.label.code for v in wound)
        voted = min(votes, key=lambda c: (-votes[c], -avg[codes.index(c)], master_rank(c)))
        return ClassifierBOutput(tuple(verdicts), wound_space.classes[codes.index(voted)], avg, False, wound_space)

    cols = list(zip(*(wound_entries(v) for v in verdicts)))
    avg = np.array([_fmean(col) for col in cols])
    total = math.fsum(avg)
    avg = avg / total if total > 0 else np.full(len(codes), 1.0 / len(codes))
    voted = min(codes, key=lambda c: (-avg[codes.index(c)], master_rank(c)))
    return ClassifierBOutput(tuple(verdicts), wound_space.classes[codes.index(voted)], avg, True, wound_space)


def classify_image(scorer: ImageScorer, image: ImageRecord | np.ndarray, wound_space: LabelSpace) -> tuple[GridSpec, ClassifierBOutput]:
    spec, patches = grid_patches(image)
    return spec, aggregate(classify_patches(scorer, patches, wound_space), wound_space)


def debug_record(image_id: str, spec: GridSpec, out: ClassifierBOutput) -> dict:
    return {
        "image_id": image_id,
        "grid": {"height": spec.height, "width": spec.width, "window": list(spec.window),
                 "stride": list(spec.stride), "rects": [list(r) for r in spec.rects()]},
        "patches": [
            {"index": v.patch_index, "scores": v.scores.as_dict(), "is_wound": v.is_wound, "label": v.label.code}
            for v in out.verdicts
        ],
        "voted_label": out.voted_label.code,
        "avg_wound_scores": dict(zip(out.wound_space.codes, map(float, out.avg_wound_scores))),
        "fallback_used": out.fallback_used,
    }


def write_debug_dump(record: dict, directory: str | Path) -> Path:
    path = Path(directory) / f"{record['image_id']}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2))
    return path
