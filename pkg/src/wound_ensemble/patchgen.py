"""Patch dataset generation: sub-patches per ROI plus offline augmentation.

Each ROI yields ``n`` (default 17) patches whose area is a fraction of the
ROI area drawn from ``coverage`` (default 75-85%). Patch 0 is centred, the
rest are placed uniformly at random inside the ROI. Training patches are then
expanded 16-fold: the 8 dihedral symmetries plus 8 random 90%-area crops,
each crop resized back and composed with one dihedral element.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .dataset import SPLITS, DatasetManifest, ImageRecord, ROIRecord, SplitAssignment
from .errors import ExtractionError, InputError, ManifestError
from .imaging import DIHEDRAL_TAGS, dihedral, load_image, resize_bilinear, save_image
from .labels import ClassLabel, LabelSpace, label
from .rng import rng_for

MIN_PATCH_SIDE = 8
N_AUGMENTED = 16
CROP_AREA = 0.9


@dataclass(frozen=True)
class PatchRecord:
    pixels: np.ndarray = field(compare=False, repr=False)
    label: ClassLabel
    source_kind: str  # "roi" or "image_grid"
    source_id: str
    rect: tuple[int, int, int, int]  # x, y, w, h in source-image pixels
    transform_tag: str = "identity"
    index: int = 0

    @property
    def patch_id(self) -> str:
        return f"{self.source_id}_{self.index}_{self.transform_tag}"


def _fits(pw: int, ph: int, roi_area: int, lo: float, hi: float) -> bool:
    area = pw * ph
    return pw >= MIN_PATCH_SIDE and ph >= MIN_PATCH_SIDE and lo * roi_area - 1e-9 <= area <= hi * roi_area + 1e-9


def _patch_size(w: int, h: int, frac: float, lo: float, hi: float) -> tuple[int, int]:
    """Integer (pw, ph) with area fraction in [lo, hi], closest to aspect w/h and area ``frac``."""
    s = math.sqrt(frac)
    pw, ph = min(w, max(1, round(w * s))), min(h, max(1, round(h * s)))
    if _fits(pw, ph, w * h, lo, hi):
        return pw, ph
    # rounding pushed the area out of range: search the feasible integer sizes
    best, best_cost = None, math.inf
    for cw in range(MIN_PATCH_SIDE, w + 1):
        ph_lo = max(MIN_PATCH_SIDE, math.ceil(lo * w * h / cw - 1e-9))
        ph_hi = min(h, math.floor(hi * w * h / cw + 1e-9))
        if ph_lo > ph_hi:
            continue
        ch = min(ph_hi, max(ph_lo, round(cw * h / w)))
        cost = abs(math.log(cw * ch / (frac * w * h))) + abs(math.log((cw / ch) / (w / h)))
        if cost < best_cost:
            best, best_cost = (cw, ch), cost
    if best is None:
        raise ExtractionError(
            f"ROI {w}x{h} admits no patch >= {MIN_PATCH_SIDE}px with coverage in [{lo}, {hi}]"
        )
    return best


def extract_patches(
    roi: ROIRecord,
    image: ImageRecord | np.ndarray,
    n: int = 17,
    coverage: tuple[float, float] = (0.75, 0.85),
    seed: int = 0,
) -> list[PatchRecord]:
    lo, hi = coverage
    if not (0 < lo <= hi <= 1):
        raise ExtractionError(f"coverage bounds must satisfy 0 < low <= high <= 1, got {coverage}")
    if n < 1:
        raise ExtractionError(f"n must be >= 1, got {n}")
    pixels = image.get_pixels() if isinstance(image, ImageRecord) else np.asarray(image)
    x0, y0, w, h = roi.rect
    if x0 < 0 or y0 < 0 or x0 + w > pixels.shape[1] or y0 + h > pixels.shape[0]:
        raise ExtractionError(f"ROI {roi.roi_id} rect {roi.rect} lies outside image {pixels.shape[1]}x{pixels.shape[0]}")

    rng = rng_for(seed, "extract", roi.roi_id)
    out = []
    for i in range(n):
        frac = lo if lo == hi else rng.uniform(lo, hi)
        pw, ph = _patch_size(w, h, frac, lo, hi)
        if i == 0:
            dx, dy = (w - pw) // 2, (h - ph) // 2
        else:
            dx, dy = int(rng.integers(0, w - pw + 1)), int(rng.integers(0, h - ph + 1))
        x, y = x0 + dx, y0 + dy
        out.append(
            PatchRecord(pixels[y : y + ph, x : x + pw].copy(), roi.label, "roi", roi.roi_id, (x, y, pw, ph), "identity", i)
        )
    return out


@dataclass(frozen=True)
class AugmentationRecipe:
    variants: tuple[str, ...]
    seed: int = 0

    def __post_init__(self):
        if len(self.variants) != N_AUGMENTED or self.variants[0] != "identity":
            raise InputError(f"a recipe needs exactly {N_AUGMENTED} variants starting with 'identity'")
        if len(set(self.variants)) != len(self.variants):
            raise InputError("recipe variants must be distinct")

    @classmethod
    def default(cls, seed: int = 0) -> "AugmentationRecipe":
        crops = tuple(f"crop{j}_{t}" for j, t in enumerate(DIHEDRAL_TAGS))
        return cls(DIHEDRAL_TAGS + crops, seed)


def _apply_variant(patch: PatchRecord, variant: str, seed: int) -> PatchRecord:
    if variant in DIHEDRAL_TAGS:
        return replace(patch, pixels=dihedral(patch.pixels, variant), transform_tag=variant)
    crop_name, _, tag = variant.partition("_")
    if not crop_name.startswith("crop") or tag not in DIHEDRAL_TAGS:
        raise InputError(f"unknown augmentation variant {variant!r}")
    h, w = patch.pixels.shape[:2]
    s = math.sqrt(CROP_AREA)
    cw, ch = max(1, round(w * s)), max(1, round(h * s))
    rng = rng_for(seed, "augment", patch.patch_id, variant)
    cx, cy = int(rng.integers(0, w - cw + 1)), int(rng.integers(0, h - ch + 1))
    crop = resize_bilinear(patch.pixels[cy : cy + ch, cx : cx + cw], (h, w))
    x, y = patch.rect[:2]
    return replace(patch, pixels=dihedral(crop, tag), rect=(x + cx, y + cy, cw, ch), transform_tag=variant)


def augment(patch: PatchRecord, recipe: AugmentationRecipe | None = None) -> list[PatchRecord]:
    recipe = recipe or AugmentationRecipe.default()
    if patch.pixels.shape[0] < MIN_PATCH_SIDE or patch.pixels.shape[1] < MIN_PATCH_SIDE:
        raise InputError(f"patch {patch.patch_id} is smaller than {MIN_PATCH_SIDE}px")
    return [_apply_variant(patch, v, recipe.seed) for v in recipe.variants]


@dataclass
class PatchDataset:
    splits: dict[str, list[PatchRecord]]
    label_space: LabelSpace

    @property
    def counts(self) -> dict[tuple[str, str], int]:
        out = {(s, c): 0 for s in SPLITS for c in self.label_space.codes}
        for s, patches in self.splits.items():
            for p in patches:
                out[(s, p.label.code)] += 1
        return out

    def count(self, split: str, code: str | None = None) -> int:
        if code is None:
            return len(self.splits.get(split, []))
        return self.counts[(split, label(code).code)]


def _split_of(split: SplitAssignment, roi: ROIRecord) -> str | None:
    key = roi.roi_id if split.unit == "roi" else roi.image_id
    return split.split_of.get(key)


def build_patch_dataset(
    manifest: DatasetManifest,
    split: SplitAssignment,
    label_subset: LabelSpace,
    seed: int = 0,
    n: int = 17,
    coverage: tuple[float, float] = (0.75, 0.85),
    augment_train: bool = True,
    images: Mapping[str, np.ndarray] | None = None,
) -> PatchDataset:
    """Extract patches from every split ROI; augment only the training split.

    ``split`` may be keyed by ROI id (``unit="roi"``) or by image id, in
    which case every ROI follows its image. ROIs whose label is outside
    ``label_subset`` or that are absent from the split are skipped.
    ``images`` optionally supplies preloaded pixels by image id.
    """
    recipe = AugmentationRecipe.default(seed)
    by_image: dict[str, list[ROIRecord]] = defaultdict(list)
    for roi in manifest.rois:
        if roi.label in label_subset and _split_of(split, roi) is not None:
            by_image[roi.image_id].append(roi)

    splits: dict[str, list[PatchRecord]] = {s: [] for s in SPLITS}
    image_map = manifest.image_map()
    for image_id in sorted(by_image):
        pixels = images[image_id] if images is not None and image_id in images else image_map[image_id].get_pixels()
        for roi in by_image[image_id]:
            s = _split_of(split, roi)
            for p in extract_patches(roi, pixels, n, coverage, seed):
                if s == "train" and augment_train:
                    splits[s].extend(augment(p, recipe))
                else:
                    splits[s].append(p)
    return PatchDataset(splits, label_subset)


INDEX_HEADER = ["patch_id", "split", "class", "source_id", "x", "y", "w", "h", "transform_tag"]


def write_patch_dataset(dataset: PatchDataset, root: str | Path) -> Path:
    """Write ``root/patches/<split>/<class>/<patch_id>.png`` and ``index.csv``."""
    base = Path(root) / "patches"
    base.mkdir(parents=True, exist_ok=True)
    with (base / "index.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(INDEX_HEADER)
        for s in SPLITS:
            for p in dataset.splits.get(s, []):
                save_image(p.pixels, base / s / p.label.code / f"{p.patch_id}.png")
                w.writerow([p.patch_id, s, p.label.code, p.source_id, *p.rect, p.transform_tag])
    return base


def read_patch_dataset(root: str | Path, label_space: LabelSpace | None = None) -> PatchDataset:
    base = Path(root) / "patches"
    index = base / "index.csv"
    if not index.exists():
        raise ManifestError(f"missing patch index {index}")
    splits: dict[str, list[PatchRecord]] = {s: [] for s in SPLITS}
    codes = []
    with index.open(newline="") as fh:
        for row in csv.DictReader(fh):
            s, code, tag = row["split"], row["class"], row["transform_tag"]
            pid = row["patch_id"]
            k = int(pid[len(row["source_id"]) + 1 :].split("_", 1)[0])
            pixels = load_image(base / s / code / f"{pid}.png")
            rect = tuple(int(row[c]) for c in ("x", "y", "w", "h"))
            splits[s].append(PatchRecord(pixels, label(code), "roi", row["source_id"], rect, tag, k))
            codes.append(code)
    return PatchDataset(splits, label_space or LabelSpace.subset(codes))
