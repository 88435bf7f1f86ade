"""PNG reading and writing."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

_BASE_COLORS = [
    (0, 0, 0),
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 212),
    (0, 128, 128),
    (220, 190, 255),
    (170, 110, 40),
    (255, 250, 200),
    (128, 0, 0),
]


def palette() -> np.ndarray:
    """Fixed 256-entry RGB palette; cluster ``i`` is always colour ``i``."""
    rest = np.random.default_rng(20240).integers(0, 256, size=(256 - len(_BASE_COLORS), 3))
    return np.vstack([np.array(_BASE_COLORS), rest]).astype(np.uint8)


def _open(path) -> Image.Image:
    path = Path(path)
    try:
        im = Image.open(path)
        im.load()
    except FileNotFoundError:
        raise FileNotFoundError(f"no such image: {path}") from None
    except OSError as exc:
        raise ValueError(f"cannot read image {path}: {exc}") from None
    if im.format != "PNG":
        raise ValueError(f"{path}: expected a PNG file, got {im.format}")
    return im


def load_image(path) -> np.ndarray:
    """Load an 8-bit PNG as an (H, W, C) float image in [0, 1]; grayscale gives C=1."""
    im = _open(path)
    if im.mode in ("L", "1"):
        arr = np.asarray(im.convert("L"), dtype=np.float64)[:, :, None]
    elif im.mode in ("RGB", "RGBA", "P", "LA"):
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    else:
        raise ValueError(f"{path}: unsupported PNG mode {im.mode} (need 8-bit grayscale or RGB)")
    return arr / 255.0


def load_mask(path) -> np.ndarray:
    """Binary mask from an 8-bit PNG: >= 128 is foreground."""
    im = _open(path)
    if im.mode not in ("L", "1", "P", "RGB", "RGBA", "LA"):
        raise ValueError(f"{path}: unsupported PNG mode {im.mode}")
    return np.asarray(im.convert("L")) >= 128


def load_label_map(path) -> np.ndarray:
    """Integer label map: palette indices for indexed PNGs, gray levels otherwise."""
    im = _open(path)
    if im.mode == "P":
        return np.asarray(im).astype(np.int64)
    if im.mode in ("L", "1"):
        return np.asarray(im.convert("L")).astype(np.int64)
    rgb = np.asarray(im.convert("RGB")).astype(np.int64)
    _, labels = np.unique(rgb.reshape(-1, 3), axis=0, return_inverse=True)
    return labels.reshape(rgb.shape[:2])


def save_indexed_png(Y: np.ndarray, path) -> None:
    Y = np.asarray(Y)
    if Y.min() < 0 or Y.max() > 255:
        raise ValueError(f"cluster ids must lie in [0, 255] to be written to {path}")
    im = Image.fromarray(Y.astype(np.uint8))
    im.putpalette(palette().reshape(-1).tolist())  # turns the L image into P
    _save(im, path)


def save_binary_png(mask: np.ndarray, path) -> None:
    _save(Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)), path)


def save_image(img: np.ndarray, path) -> None:
    arr = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    _save(Image.fromarray(arr), path)


def _save(im: Image.Image, path) -> None:
    path = Path(path)
    try:
        im.save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def resize_image(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of an (H, W, C) float image to (h, w)."""
    from .numerics import resize_bilinear_array

    if img.shape[:2] == tuple(size):
        return img
    return resize_bilinear_array(img, *size)


def resize_labels(Y: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resize of an integer label map."""
    h, w = Y.shape
    oh, ow = size
    if (h, w) == (oh, ow):
        return Y
    rows = np.minimum((np.arange(oh) + 0.5) * h / oh, h - 1).astype(np.intp)
    cols = np.minimum((np.arange(ow) + 0.5) * w / ow, w - 1).astype(np.intp)
    return Y[rows[:, None], cols[None, :]]
