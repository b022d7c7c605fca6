"""Synthetic wound corpus for desk-scale runs.

Each image is a noisy background (BG) framing a rectangle of skin (N) that
holds one wound blob. Wound classes differ by colour (separable by mean
colour inside the wound) and by shape: D round, V wide oval, P rounded
rectangle, S thin elongated oval. A ``scale_mix`` fraction of images carry a
small wound (< 10% of the image area); the rest a zoomed-in wound.

With ``context_rois`` each image also gets BG ROIs (a pure margin strip and
a corner window straddling the background/skin edge) and, when the wound
leaves room, an N ROI of bare skin.

Besides ``images/`` and ``rois.csv`` the generator writes ``mock_rule.csv``
(one colour box per class) so the mock scorers work on the output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dataset import DatasetManifest, ROIRecord, load_manifest, write_rois_csv
from ..errors import ConfigError, ImageIOError
from ..imaging import save_image
from ..labels import label, parse_codes
from ..rng import rng_for
from ..scorer.mock import write_mock_rule

COLORS = {
    "D": (160, 30, 30),
    "V": (90, 50, 160),
    "P": (230, 140, 40),
    "S": (240, 110, 200),
    "N": (210, 170, 140),
    "BG": (50, 100, 100),
}
# (aspect ratio range w/h, ellipse or rectangle)
SHAPES = {
    "D": ((1.0, 1.4), "ellipse"),
    "V": ((1.6, 2.2), "ellipse"),
    "P": ((0.9, 1.3), "rect"),
    "S": ((3.0, 4.5), "ellipse"),
}
SMALL_AREA = (0.04, 0.08)
LARGE_AREA = (0.22, 0.40)
MIN_WOUND_SIDE = 12
MIN_CONTEXT_SIDE = 12
ROI_MARGIN = 0.2  # wound ROIs are drawn loosely, this fraction of each side as skin margin
RULE_MARGIN = 24
# a class count maps to the task sets used in the experiments
TASKS_BY_SIZE = {1: ("S",), 2: ("S", "V"), 3: ("D", "S", "V"), 4: ("D", "V", "P", "S")}


@dataclass(frozen=True)
class SyntheticSpec:
    classes: tuple[str, ...] | int = ("D", "S", "V")
    images_per_class: int = 50
    image_size: tuple[int, int] = (96, 96)
    scale_mix: float = 0.5
    seed: int = 0
    context_rois: bool = False
    extra_test_fraction: float = 0.0
    color_jitter: int = 6
    noise: int = 12

    @property
    def codes(self) -> tuple[str, ...]:
        if isinstance(self.classes, int):
            if self.classes not in TASKS_BY_SIZE:
                raise ConfigError(f"classes must be one of {sorted(TASKS_BY_SIZE)}, got {self.classes}")
            return TASKS_BY_SIZE[self.classes]
        return tuple(parse_codes(self.classes))

    def validate(self) -> None:
        for c in self.codes:
            if label(c).non_wound:
                raise ConfigError(f"synthetic classes must be wound types, got {c}")
        h, w = self.image_size
        if h < 64 or w < 64:
            raise ConfigError(f"image_size must be at least 64x64, got {self.image_size}")
        if self.images_per_class < 1 or not 0 <= self.scale_mix <= 1:
            raise ConfigError("images_per_class must be >= 1 and scale_mix in [0, 1]")
        if self.color_jitter + self.noise >= RULE_MARGIN:
            raise ConfigError(f"color_jitter + noise must stay below the rule margin {RULE_MARGIN}")


def _fill(canvas, mask, color, jitter, noise, rng):
    base = np.asarray(color, dtype=np.int64) + rng.integers(-jitter, jitter + 1, size=3)
    n = int(mask.sum())
    vals = base + rng.integers(-noise, noise + 1, size=(n, 3))
    canvas[mask] = np.clip(vals, 0, 255)


def _wound_box(rng, code, small, skin, image_area):
    sx, sy, sw, sh = skin
    (a_lo, a_hi), _ = SHAPES[code]
    aspect = rng.uniform(a_lo, a_hi)
    frac = rng.uniform(*(SMALL_AREA if small else LARGE_AREA))
    area = frac * image_area
    bw = min(sw - 2, max(MIN_WOUND_SIDE, round(math.sqrt(area * aspect))))
    bh = min(sh - 2, max(MIN_WOUND_SIDE, round(area / bw)))
    x = sx + int(rng.integers(1, sw - bw))
    y = sy + int(rng.integers(1, sh - bh))
    return x, y, bw, bh


def _largest(rects):
    ok = [r for r in rects if r[2] >= MIN_CONTEXT_SIDE and r[3] >= MIN_CONTEXT_SIDE]
    return max(ok, key=lambda r: (r[2] * r[3], r)) if ok else None


def render_image(spec: SyntheticSpec, code: str, index: int, small: bool):
    """Return (pixels, wound_roi, wound_pixel_fraction, context_rects)."""
    rng = rng_for(spec.seed, "synth", code, index)
    H, W = spec.image_size
    img = np.zeros((H, W, 3), dtype=np.uint8)
    yy, xx = np.mgrid[0:H, 0:W]

    _fill(img, np.ones((H, W), bool), COLORS["BG"], spec.color_jitter, spec.noise, rng)
    mt, mb, ml, mr = (int(v) for v in rng.integers(MIN_CONTEXT_SIDE, MIN_CONTEXT_SIDE + 9, size=4))
    skin = (ml, mt, W - ml - mr, H - mt - mb)
    skin_mask = (xx >= ml) & (xx < W - mr) & (yy >= mt) & (yy < H - mb)
    _fill(img, skin_mask, COLORS["N"], spec.color_jitter, spec.noise, rng)

    x, y, bw, bh = _wound_box(rng, code, small, skin, H * W)
    if SHAPES[code][1] == "ellipse":
        cx, cy = x + (bw - 1) / 2, y + (bh - 1) / 2
        mask = ((xx - cx) / (bw / 2)) ** 2 + ((yy - cy) / (bh / 2)) ** 2 <= 1.0
    else:
        r = min(bw, bh) // 4  # rounded corners
        inner = (xx >= x) & (xx < x + bw) & (yy >= y) & (yy < y + bh)
        cx = np.clip(xx, x + r, x + bw - 1 - r)
        cy = np.clip(yy, y + r, y + bh - 1 - r)
        mask = inner & ((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r)
    _fill(img, mask, COLORS[code], spec.color_jitter, spec.noise, rng)

    sx, sy, sw, sh = skin
    n_rect = _largest([
        (sx, sy, x - sx, sh),
        (x + bw, sy, sx + sw - x - bw, sh),
        (sx, sy, sw, y - sy),
        (sx, y + bh, sw, sy + sh - y - bh),
    ])
    bg_rect = _largest([(0, 0, W, mt), (0, H - mb, W, mb), (0, 0, ml, H), (W - mr, 0, mr, H)])
    # a corner window straddling the background/skin edge, clear of the wound
    edge = 2 * MIN_CONTEXT_SIDE
    corners = [(0, 0, ml + edge, mt + edge), (W - mr - edge, 0, mr + edge, mt + edge),
               (0, H - mb - edge, ml + edge, mb + edge), (W - mr - edge, H - mb - edge, mr + edge, mb + edge)]
    clear = [c for c in corners if not _overlaps(c, (x, y, bw, bh))]
    edge_rect = max(clear, key=lambda r: (r[2] * r[3], r)) if clear else None
    mx, my = round(ROI_MARGIN * bw), round(ROI_MARGIN * bh)
    x0, y0 = max(sx, x - mx), max(sy, y - my)
    x1, y1 = min(sx + sw, x + bw + mx), min(sy + sh, y + bh + my)
    roi = (x0, y0, x1 - x0, y1 - y0)
    return img, roi, float(mask.mean()), {"N": n_rect, "BG": bg_rect, "BG_edge": edge_rect}


def _overlaps(a, b) -> bool:
    return a[0] < b[0] + b[2] and b[0] < a[0] + a[2] and a[1] < b[1] + b[3] and b[1] < a[1] + a[3]


def mock_rule_for(codes) -> dict[str, tuple[int, ...]]:
    rule = {}
    for c in [*codes, "BG", "N"]:
        r, g, b = COLORS[c]
        rule[c] = tuple(v for ch in (r, g, b) for v in (max(0, ch - RULE_MARGIN), min(255, ch + RULE_MARGIN)))
    return rule


def generate_synthetic(spec: SyntheticSpec, out: str | Path) -> DatasetManifest:
    spec.validate()
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ImageIOError(f"cannot write to {out}: {exc}") from exc

    rois: list[ROIRecord] = []
    collections = []
    for code in spec.codes:
        n = spec.images_per_class
        n_small = round(spec.scale_mix * n)
        small_idx = set(rng_for(spec.seed, "scale", code).permutation(n)[:n_small].tolist())
        n_extra = round(spec.extra_test_fraction * n)
        for i in range(n):
            img_id = f"{code.lower()}{i:04d}"
            pixels, rect, _, context = render_image(spec, code, i, i in small_idx)
            save_image(pixels, out / "images" / code / f"{img_id}.png")
            k = 0
            rois.append(ROIRecord(f"{img_id}-r{k}", img_id, rect, label(code)))
            if spec.context_rois:
                for ctx in ("BG", "BG_edge", "N"):
                    if context[ctx] is not None:
                        k += 1
                        rois.append(ROIRecord(f"{img_id}-r{k}", img_id, context[ctx], label(ctx.split("_")[0])))
            collections.append((img_id, "extra_test" if i >= n - n_extra else "base"))

    write_rois_csv(rois, out / "rois.csv")
    with (out / "collections.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "collection"])
        w.writerows(collections)
    write_mock_rule(mock_rule_for(spec.codes), out / "mock_rule.csv")
    return load_manifest(out)
