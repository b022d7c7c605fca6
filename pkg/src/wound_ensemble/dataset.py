"""Corpus manifest, stratified splits and cross-validation fold plans.

On-disk layout::

    root/images/<class_code>/<id>.jpg|png
    root/rois.csv            image_id,x,y,w,h,label
    root/collections.csv     id,collection      (optional; default "base")
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import FoldError, ManifestError, StratificationError, ValidationError
from .imaging import IMAGE_SUFFIXES, image_size, load_image
from .labels import ClassLabel, LabelSpace, label
from .rng import rng_for

SCHEMA_VERSION = 1
SPLITS = ("train", "validation", "test")
MIN_ROI_SIDE = 8
FOLD_MODES = ("disjoint_stratified", "paper_random_resample")
ROIS_HEADER = ["image_id", "x", "y", "w", "h", "label"]


@dataclass(frozen=True)
class ImageRecord:
    id: str
    label: ClassLabel
    source_path: str
    height: int
    width: int
    collection: str = "base"
    pixels: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError(f"image {self.id} has empty size {self.height}x{self.width}")
        if self.label.non_wound:
            raise ValidationError(f"image {self.id} carries non-wound label {self.label.code}")

    def get_pixels(self) -> np.ndarray:
        if self.pixels is not None:
            return self.pixels
        return load_image(self.source_path)

    def loaded(self) -> "ImageRecord":
        return self if self.pixels is not None else replace(self, pixels=self.get_pixels())


@dataclass(frozen=True)
class ROIRecord:
    roi_id: str
    image_id: str
    rect: tuple[int, int, int, int]  # x, y, w, h
    label: ClassLabel

    def inside(self, height: int, width: int) -> bool:
        x, y, w, h = self.rect
        return x >= 0 and y >= 0 and x + w <= width and y + h <= height


@dataclass(frozen=True)
class DatasetManifest:
    images: tuple[ImageRecord, ...]
    rois: tuple[ROIRecord, ...]
    label_space: LabelSpace = field(default_factory=LabelSpace.full)
    root: str = ""

    def __post_init__(self):
        ids = [im.id for im in self.images]
        dup = [i for i, n in Counter(ids).items() if n > 1]
        if dup:
            raise ManifestError(f"duplicate image ids: {sorted(dup)}")
        known = set(ids)
        unknown = sorted({r.image_id for r in self.rois if r.image_id not in known})
        if unknown:
            raise ValidationError(f"ROIs reference unknown image ids: {unknown}")
        by_id = {im.id: im for im in self.images}
        for r in self.rois:
            im = by_id[r.image_id]
            if not r.inside(im.height, im.width):
                raise ValidationError(
                    f"ROI {r.roi_id} rect {r.rect} lies outside image {im.id} ({im.width}x{im.height})"
                )
            if r.rect[2] < MIN_ROI_SIDE or r.rect[3] < MIN_ROI_SIDE:
                raise ValidationError(f"ROI {r.roi_id} rect {r.rect} is smaller than {MIN_ROI_SIDE}px")
            if r.label not in self.label_space:
                raise ValidationError(f"ROI {r.roi_id} label {r.label.code} not in {self.label_space.codes}")
        for im in self.images:
            if im.label not in self.label_space:
                raise ValidationError(f"image {im.id} label {im.label.code} not in {self.label_space.codes}")
        roi_ids = [r.roi_id for r in self.rois]
        dup = [i for i, n in Counter(roi_ids).items() if n > 1]
        if dup:
            raise ManifestError(f"duplicate ROI ids: {sorted(dup)}")

    def image(self, image_id: str) -> ImageRecord:
        for im in self.images:
            if im.id == image_id:
                return im
        raise KeyError(image_id)

    def image_map(self) -> dict[str, ImageRecord]:
        return {im.id: im for im in self.images}

    def rois_for(self, image_ids: Iterable[str]) -> list[ROIRecord]:
        wanted = set(image_ids)
        return [r for r in self.rois if r.image_id in wanted]

    def collections(self) -> list[str]:
        return sorted({im.collection for im in self.images})

    def image_ids(self, collection: str | None = None) -> list[str]:
        return [im.id for im in self.images if collection is None or im.collection == collection]

    def class_counts(self, kind: str = "images", collection: str | None = None) -> dict[str, int]:
        if kind == "images":
            labels = [im.label.code for im in self.images if collection is None or im.collection == collection]
        elif kind == "rois":
            labels = [r.label.code for r in self.rois]
        else:
            raise ValueError(f"kind must be 'images' or 'rois', got {kind!r}")
        counts = Counter(labels)
        return {c: counts[c] for c in self.label_space.codes if counts[c]}

    def restrict(self, image_ids: Iterable[str]) -> "DatasetManifest":
        keep = set(image_ids)
        return DatasetManifest(
            tuple(im for im in self.images if im.id in keep),
            tuple(r for r in self.rois if r.image_id in keep),
            self.label_space,
            self.root,
        )

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        root = Path(self.root) if self.root else None

        def rel(p: str) -> str:
            if root is not None:
                try:
                    return Path(p).relative_to(root).as_posix()
                except ValueError:
                    pass
            return p

        return {
            "schema": SCHEMA_VERSION,
            "root": self.root,
            "label_space": list(self.label_space.codes),
            "images": [
                {
                    "id": im.id,
                    "label": im.label.code,
                    "path": rel(im.source_path),
                    "height": im.height,
                    "width": im.width,
                    "collection": im.collection,
                }
                for im in self.images
            ],
            "rois": [
                {"roi_id": r.roi_id, "image_id": r.image_id, "x": r.rect[0], "y": r.rect[1],
                 "w": r.rect[2], "h": r.rect[3], "label": r.label.code}
                for r in self.rois
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DatasetManifest":
        if data.get("schema") != SCHEMA_VERSION:
            raise ManifestError(f"unsupported manifest schema {data.get('schema')!r}")
        root = data.get("root", "")
        images = []
        for d in data["images"]:
            path = d["path"]
            if root and not Path(path).is_absolute():
                path = str(Path(root) / path)
            images.append(ImageRecord(d["id"], label(d["label"]), path, int(d["height"]),
                                      int(d["width"]), d.get("collection", "base")))
        rois = [
            ROIRecord(d["roi_id"], d["image_id"], (int(d["x"]), int(d["y"]), int(d["w"]), int(d["h"])),
                      label(d["label"]))
            for d in data["rois"]
        ]
        return cls(tuple(images), tuple(rois), LabelSpace.of(data["label_space"]), root)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        return cls.from_dict(data)


def load_manifest(root: str | Path, require_rois: bool = True) -> DatasetManifest:
    """Scan a dataset directory and validate it into a manifest."""
    root = Path(root)
    img_dir = root / "images"
    if not img_dir.is_dir():
        raise ManifestError(f"no images found: {img_dir} does not exist")
    space = LabelSpace.full()

    collections: dict[str, str] = {}
    coll_path = root / "collections.csv"
    if coll_path.exists():
        with coll_path.open(newline="") as fh:
            for row in csv.DictReader(fh):
                collections[row["id"].strip()] = row["collection"].strip()

    seen: dict[str, Path] = {}
    images = []
    for class_dir in sorted(p for p in img_dir.iterdir() if p.is_dir()):
        if class_dir.name not in space:
            raise ManifestError(f"unknown class directory {class_dir}")
        lab = label(class_dir.name)
        for f in sorted(class_dir.iterdir()):
            if f.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            if f.stem in seen:
                raise ManifestError(f"duplicate image id {f.stem!r}: {seen[f.stem]} and {f}")
            seen[f.stem] = f
            h, w = image_size(f)
            try:
                images.append(ImageRecord(f.stem, lab, str(f), h, w, collections.get(f.stem, "base")))
            except ValidationError as exc:
                raise ValidationError(f"{f}: {exc}") from exc
    if not images:
        raise ManifestError(f"no images found under {img_dir}")

    rois_path = root / "rois.csv"
    rois = []
    if rois_path.exists():
        rois = read_rois_csv(rois_path)
    elif require_rois:
        raise ManifestError(f"missing ROI file {rois_path}")
    return DatasetManifest(tuple(images), tuple(rois), space, str(root))


def read_rois_csv(path: str | Path) -> list[ROIRecord]:
    path = Path(path)
    rois = []
    per_image: Counter = Counter()
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ROIS_HEADER:
            raise ManifestError(f"{path}: header must be {','.join(ROIS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rect = tuple(int(row[k]) for k in ("x", "y", "w", "h"))
            except (TypeError, ValueError):
                raise ManifestError(f"{path}:{lineno}: non-integer ROI geometry") from None
            image_id = row["image_id"].strip()
            try:
                lab = label(row["label"])
            except Exception as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            rois.append(ROIRecord(f"{image_id}-r{per_image[image_id]}", image_id, rect, lab))
            per_image[image_id] += 1
    return rois


def write_rois_csv(rois: Sequence[ROIRecord], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ROIS_HEADER)
        for r in rois:
            w.writerow([r.image_id, *r.rect, r.label.code])


# -- splits ------------------------------------------------------------


@dataclass(frozen=True)
class SplitAssignment:
    split_of: Mapping[str, str]
    seed: int
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15)
    unit: str = "roi"

    def ids_in(self, split: str) -> list[str]:
        return sorted(i for i, s in self.split_of.items() if s == split)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "unit": self.unit,
            "splits": {s: self.ids_in(s) for s in SPLITS},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SplitAssignment":
        split_of = {i: s for s, ids in data["splits"].items() for i in ids}
        return cls(split_of, int(data["seed"]), tuple(data["ratios"]), data.get("unit", "roi"))


def _allocate(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of n items; every positive bin gets >= 1."""
    exact = [r * n for r in ratios]
    counts = [math.floor(e + 1e-9) for e in exact]
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    for i, r in enumerate(ratios):
        if r > 0 and counts[i] == 0:
            donor = max(range(len(counts)), key=lambda j: (counts[j], -j))
            counts[donor] -= 1
            counts[i] += 1
    return counts


def _items(manifest: DatasetManifest, unit: str, ids: Iterable[str] | None) -> dict[str, str]:
    if unit == "roi":
        items = {r.roi_id: r.label.code for r in manifest.rois}
    elif unit == "image":
        items = {im.id: im.label.code for im in manifest.images}
    else:
        raise ValueError(f"unit must be 'roi' or 'image', got {unit!r}")
    if ids is not None:
        wanted = set(ids)
        items = {i: c for i, c in items.items() if i in wanted}
    return items


def _by_class(items: Mapping[str, str]) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = defaultdict(list)
    for i, c in items.items():
        groups[c].append(i)
    # master order, ids sorted: the grouping must not depend on input order
    return {c: sorted(groups[c]) for c in sorted(groups, key=lambda c: LabelSpace.full().index(c))}


def stratified_split(
    manifest: DatasetManifest,
    ratios: Sequence[float] = (0.70, 0.15, 0.15),
    seed: int = 0,
    unit: str = "roi",
    ids: Iterable[str] | None = None,
) -> SplitAssignment:
    """Per-class train/validation/test partition of ROIs (or images)."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise StratificationError(f"ratios must be three non-negative fractions, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise StratificationError(f"ratios must sum to 1, got {ratios} (sum {sum(ratios)})")
    bins = sum(1 for r in ratios if r > 0)
    split_of: dict[str, str] = {}
    for code, members in _by_class(_items(manifest, unit, ids)).items():
        if len(members) < bins:
            raise StratificationError(
                f"class {code} has {len(members)} items, fewer than the {bins} split bins"
            )
        order = rng_for(seed, "split", unit, code).permutation(len(members))
        counts = _allocate(len(members), ratios)
        pos = 0
        for split, n in zip(SPLITS, counts):
            for j in order[pos : pos + n]:
                split_of[members[j]] = split
            pos += n
    return SplitAssignment(dict(sorted(split_of.items())), seed, ratios, unit)


# -- fold plans --------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    k: int
    mode: str
    rounds: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]  # (train_ids, test_ids)
    seed: int
    unit: str = "image"

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "mode": self.mode,
            "seed": self.seed,
            "unit": self.unit,
            "rounds": [{"round": i + 1, "train": list(tr), "test": list(te)} for i, (tr, te) in enumerate(self.rounds)],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FoldPlan":
        rounds = tuple((tuple(r["train"]), tuple(r["test"])) for r in data["rounds"])
        return cls(int(data["k"]), data["mode"], rounds, int(data["seed"]), data.get("unit", "image"))


def normalize_mode(mode: str) -> str:
    aliases = {"disjoint": "disjoint_stratified", "paper": "paper_random_resample"}
    mode = aliases.get(mode, mode)
    if mode not in FOLD_MODES:
        raise FoldError(f"unknown fold mode {mode!r}; expected one of {FOLD_MODES} or disjoint/paper")
    return mode


def make_fold_plan(
    manifest: DatasetManifest,
    k: int = 5,
    mode: str = "disjoint_stratified",
    seed: int = 0,
    unit: str = "image",
    ids: Iterable[str] | None = None,
) -> FoldPlan:
    """k train/test rounds over the pooled id set.

    ``disjoint_stratified`` partitions each class into k near-equal test
    folds. ``paper_random_resample`` draws round(n/k) items per class
    afresh each round (20% at k=5), so test sets may overlap.
    """
    mode = normalize_mode(mode)
    if k < 2:
        raise FoldError(f"k must be >= 2, got {k}")
    groups = _by_class(_items(manifest, unit, ids))
    if not groups:
        raise FoldError("no items to fold")
    for code, members in groups.items():
        if len(members) < k:
            raise FoldError(f"k={k} is larger than class {code} ({len(members)} items)")
    all_ids = sorted(i for members in groups.values() for i in members)

    tests: list[list[str]] = [[] for _ in range(k)]
    if mode == "disjoint_stratified":
        offset = 0
        for code, members in groups.items():
            order = rng_for(seed, "fold", code).permutation(len(members))
            for j, idx in enumerate(order):
                tests[(j + offset) % k].append(members[idx])
            # rotate the start fold so per-fold totals stay balanced across classes
            offset = (offset + len(members)) % k
    else:
        for r in range(k):
            for code, members in groups.items():
                m = math.floor(len(members) / k + 0.5)
                pick = rng_for(seed, "resample", r, code).choice(len(members), size=m, replace=False)
                tests[r].extend(members[i] for i in pick)

    rounds = []
    for t in tests:
        tset = set(t)
        rounds.append((tuple(i for i in all_ids if i not in tset), tuple(sorted(t))))
    return FoldPlan(k, mode, tuple(rounds), seed, unit)
