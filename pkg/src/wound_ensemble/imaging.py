"""Pixel-level helpers: image I/O, bilinear resize, dihedral transforms."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageIOError, InputError

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


def load_image(path: str | Path) -> np.ndarray:
    """Read an image as an H x W x 3 uint8 array."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except (OSError, UnidentifiedImageError) as exc:
        raise ImageIOError(f"cannot read image {path}: {exc}") from exc


def image_size(path: str | Path) -> tuple[int, int]:
    """(height, width) from the file header, without decoding pixels."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            w, h = im.size
    except (OSError, UnidentifiedImageError) as exc:
        raise ImageIOError(f"cannot read image {path}: {exc}") from exc
    return h, w


def save_image(pixels: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(as_rgb(pixels)).save(path)


def as_rgb(pixels) -> np.ndarray:
    arr = np.asarray(pixels)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError(f"expected an H x W x 3 image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    return arr


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres (align_corners=False)
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(pixels: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize to ``size = (height, width)``.

    uint8 input gives uint8 output rounded half-to-even; float input stays
    float64. Same-size input is returned unchanged (no resampling).
    """
    arr = np.asarray(pixels)
    h_out, w_out = int(size[0]), int(size[1])
    if h_out < 1 or w_out < 1:
        raise InputError(f"invalid resize target {size}")
    if arr.shape[:2] == (h_out, w_out):
        return arr
    y0, y1, wy = _axis_weights(arr.shape[0], h_out)
    x0, x1, wx = _axis_weights(arr.shape[1], w_out)
    a = arr.astype(np.float64)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = a[y0][:, x0] * (1 - wx) + a[y0][:, x1] * wx
    bot = a[y1][:, x0] * (1 - wx) + a[y1][:, x1] * wx
    out = top * (1 - wy) + bot * wy
    if arr.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out


# The eight elements of the dihedral group of the square, as array maps.
DIHEDRAL = {
    "identity": lambda a: a,
    "rot90": lambda a: np.rot90(a, 1),
    "rot180": lambda a: np.rot90(a, 2),
    "rot270": lambda a: np.rot90(a, 3),
    "hflip": lambda a: a[:, ::-1],
    "vflip": lambda a: a[::-1, :],
    "hflip_rot90": lambda a: np.rot90(a, 1)[:, ::-1],
    "hflip_rot270": lambda a: np.rot90(a, 3)[:, ::-1],
}
DIHEDRAL_TAGS = tuple(DIHEDRAL)


def dihedral(pixels: np.ndarray, tag: str) -> np.ndarray:
    return np.ascontiguousarray(DIHEDRAL[tag](pixels))
