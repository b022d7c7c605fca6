from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wound_ensemble.dataset import DatasetManifest, ImageRecord, ROIRecord
from wound_ensemble.imaging import save_image
from wound_ensemble.labels import LabelSpace, label


def memory_manifest(per_class: dict[str, int], rois_per_image: int = 1, size=(64, 64), seed: int = 0,
                    roi_size=(40, 40)) -> DatasetManifest:
    """In-memory manifest: flat-colour images, ROIs placed on a diagonal."""
    rng = np.random.default_rng(seed)
    images, rois = [], []
    for code, n in per_class.items():
        for i in range(n):
            px = np.full((*size, 3), rng.integers(0, 256, 3), dtype=np.uint8)
            img_id = f"{code.lower()}{i:04d}"
            images.append(ImageRecord(img_id, label(code), "", size[0], size[1], pixels=px))
            for k in range(rois_per_image):
                off = k % max(1, min(size) - max(roi_size))
                rois.append(ROIRecord(f"{img_id}-r{k}", img_id, (off, off, *roi_size), label(code)))
    return DatasetManifest(tuple(images), tuple(rois), LabelSpace.full())


def write_dataset(root: Path, per_class: dict[str, int], size=(32, 32), rois: bool = True) -> Path:
    root = Path(root)
    lines = ["image_id,x,y,w,h,label"]
    for code, n in per_class.items():
        for i in range(n):
            img_id = f"{code.lower()}{i:04d}"
            save_image(np.full((*size, 3), 40 * (i % 5), dtype=np.uint8), root / "images" / code / f"{img_id}.png")
            lines.append(f"{img_id},2,2,16,16,{code}")
    if rois:
        (root / "rois.csv").write_text("\n".join(lines) + "\n")
    return root


@pytest.fixture
def manifest_100():
    return memory_manifest({"D": 100, "V": 100, "P": 100, "S": 100})


# one line per acceptance criterion, printed after the run even when output is captured
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
