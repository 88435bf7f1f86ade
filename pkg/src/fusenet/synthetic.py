"""Seeded synthetic fixtures with known masks.

``two_region`` mimics a lesion on skin: one ellipse on a flat background.
``four_region`` adds two distractor shapes of other colours; the ground
truth is the ellipse only.
"""

from __future__ import annotations

import numpy as np

SKIN = np.array([0.85, 0.68, 0.58])
LESION = np.array([0.35, 0.2, 0.15])
DISTRACTORS = (np.array([0.55, 0.6, 0.8]), np.array([0.6, 0.45, 0.3]))


def _ellipse(size: int, cy: float, cx: float, ry: float, rx: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    return ((yy + 0.5 - cy) / ry) ** 2 + ((xx + 0.5 - cx) / rx) ** 2 <= 1.0


def _finish(img: np.ndarray, rng: np.random.Generator, noise: float, channels: int) -> np.ndarray:
    img = img + rng.normal(0.0, noise, size=img.shape)
    img = np.clip(img, 0.0, 1.0)
    if channels == 1:
        img = (img @ np.array([0.299, 0.587, 0.114]))[:, :, None]
    return img


def two_region(seed: int, size: int = 64, noise: float = 0.05, channels: int = 3):
    """Ellipse on a flat background; returns ``(image, mask)``."""
    rng = np.random.default_rng(seed)
    cy, cx = rng.uniform(0.35, 0.65, size=2) * size
    ry, rx = rng.uniform(0.18, 0.3, size=2) * size
    mask = _ellipse(size, cy, cx, ry, rx)
    bg = np.clip(SKIN + rng.uniform(-0.05, 0.05, 3), 0, 1)
    fg = np.clip(LESION + rng.uniform(-0.05, 0.05, 3), 0, 1)
    img = np.where(mask[:, :, None], fg, bg)
    return _finish(img, rng, noise, channels), mask


def four_region(seed: int, size: int = 64, noise: float = 0.05, channels: int = 3):
    """Target ellipse plus a rectangle and a disc in other colours on a background.

    Returns ``(image, mask)`` where the mask covers the target ellipse only.
    """
    rng = np.random.default_rng(seed)
    cy, cx = rng.uniform(0.4, 0.6, size=2) * size
    ry, rx = rng.uniform(0.16, 0.24, size=2) * size
    target = _ellipse(size, cy, cx, ry, rx)
    bg = np.clip(SKIN + rng.uniform(-0.05, 0.05, 3), 0, 1)
    img = np.broadcast_to(bg, (size, size, 3)).copy()

    # distractors hug two random corners, away from the target
    corners = rng.permutation(4)[:2]
    for color, corner in zip(DISTRACTORS, corners):
        h, w = (rng.uniform(0.15, 0.25, size=2) * size).astype(int) + 2
        top = 1 if corner in (0, 1) else size - h - 1
        left = 1 if corner in (0, 2) else size - w - 1
        region = np.zeros((size, size), dtype=bool)
        if corner % 2:
            region = _ellipse(size, top + h / 2, left + w / 2, h / 2, w / 2)
        else:
            region[top : top + h, left : left + w] = True
        region &= ~target
        img[region] = np.clip(color + rng.uniform(-0.05, 0.05, 3), 0, 1)

    fg = np.clip(LESION + rng.uniform(-0.05, 0.05, 3), 0, 1)
    img[target] = fg
    return _finish(img, rng, noise, channels), target
