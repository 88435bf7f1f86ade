"""Photometric augmentation for the second stream.

Only colour jitter and Gaussian blur are applied, so the augmented view stays
pixel-aligned with the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class AugmentConfig:
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    blur_sigma: tuple[float, float] = (0.1, 2.0)
    blur_kernel_size: int = 5
    seed: int = 0
    resample_each_iteration: bool = False

    def __post_init__(self):
        for name in ("brightness", "contrast", "saturation"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ValueError(f"{name} strength must be in [0, 1), got {v}")
        lo, hi = self.blur_sigma
        if lo > hi or lo < 0:
            raise ValueError(f"invalid blur sigma range {self.blur_sigma}")
        if self.blur_kernel_size < 1 or self.blur_kernel_size % 2 == 0:
            raise ValueError(f"blur kernel size must be odd and positive, got {self.blur_kernel_size}")

    @property
    def is_identity(self) -> bool:
        return self.brightness == self.contrast == self.saturation == 0 and self.blur_sigma == (0, 0)


def grayscale(img: np.ndarray) -> np.ndarray:
    """(H, W) luminance of an (H, W, C) image; single channel passes through."""
    if img.shape[2] == 3:
        return img @ LUMA
    return img.mean(axis=2)


def adjust_brightness(img: np.ndarray, factor: float) -> np.ndarray:
    return np.clip(img * factor, 0.0, 1.0)


def adjust_contrast(img: np.ndarray, factor: float) -> np.ndarray:
    mean = grayscale(img).mean()
    return np.clip(img * factor + mean * (1.0 - factor), 0.0, 1.0)


def adjust_saturation(img: np.ndarray, factor: float) -> np.ndarray:
    gray = grayscale(img)[:, :, None]
    return np.clip(img * factor + gray * (1.0 - factor), 0.0, 1.0)


def color_jitter(img: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Brightness, then contrast, then saturation, each with factor U[1-s, 1+s]."""
    b, c, s = (rng.uniform(1 - v, 1 + v) for v in (cfg.brightness, cfg.contrast, cfg.saturation))
    out = adjust_brightness(img, b)
    out = adjust_contrast(out, c)
    return adjust_saturation(out, s)


def gaussian_kernel1d(sigma: float, ksize: int) -> np.ndarray:
    x = np.arange(ksize) - ksize // 2
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float, ksize: int) -> np.ndarray:
    """Separable Gaussian blur with edge-replicate padding."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if ksize < 1 or ksize % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {ksize}")
    k = gaussian_kernel1d(sigma, ksize)
    r = ksize // 2
    h, w = img.shape[:2]
    p = np.pad(img, ((r, r), (0, 0), (0, 0)), mode="edge")
    tmp = sum(k[i] * p[i : i + h] for i in range(ksize))
    p = np.pad(tmp, ((0, 0), (r, r), (0, 0)), mode="edge")
    return sum(k[i] * p[:, i : i + w] for i in range(ksize))


def make_augmented_view(
    img: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Colour jitter followed by a Gaussian blur with sigma ~ U[lo, hi].

    A zero blur range (0, 0) skips the blur, so zero strengths give the
    image back unchanged.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    img = np.asarray(img, dtype=np.float64)
    out = color_jitter(img, cfg, rng)
    lo, hi = cfg.blur_sigma
    if hi > 0:
        out = gaussian_blur(out, rng.uniform(lo, hi), cfg.blur_kernel_size)
    return np.clip(out, 0.0, 1.0)
