"""Evaluation protocol: best-overlap cluster selection, Dice, XOR and HM.

XOR is (FP + FN) / |gt| in percent.  HM is taken as the symmetric Hausdorff
distance between the 4-connected boundaries of the two masks, in pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import directed_hausdorff

# Reported PH2 / Lung numbers for the full method, kept for reference only.
REFERENCE_PH2 = {"dsc": 88.7, "hm": 19.3, "xor": 20.1}
REFERENCE_LUNG = {"dsc": 95.3, "hm": 7.2, "xor": 4.7}


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    pred, gt = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return pred, gt


def best_overlap_cluster(Y: np.ndarray, gt: np.ndarray) -> tuple[int, np.ndarray]:
    """Cluster with the largest intersection with ``gt`` (lowest id on ties)."""
    Y = np.asarray(Y)
    gt = np.asarray(gt, dtype=bool)
    if Y.shape != gt.shape:
        raise ValueError(f"segmentation {Y.shape} and mask {gt.shape} differ in shape")
    if not gt.any():
        raise ValueError("ground-truth mask is empty; best-overlap selection is undefined")
    labels = Y.astype(np.int64).ravel()
    offset = labels.min()
    counts = np.bincount(labels[gt.ravel()] - offset, minlength=labels.max() - offset + 1)
    cluster = int(np.argmax(counts) + offset)
    return cluster, Y == cluster


def dice(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    total = int(pred.sum()) + int(gt.sum())
    if not pred.any() or total == 0:
        return 0.0
    return 100.0 * 2 * int((pred & gt).sum()) / total


def xor_metric(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    n = int(gt.sum())
    if n == 0:
        raise ValueError("ground-truth mask is empty")
    return 100.0 * int((pred ^ gt).sum()) / n


def boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with a background 4-neighbour; outside counts as background."""
    m = np.pad(np.asarray(mask, dtype=bool), 1)
    inner = m[1:-1, 1:-1]
    interior = m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
    return inner & ~interior


def hammoud_distance(pred, gt) -> float:
    """Symmetric Hausdorff distance between mask boundaries.

    An empty prediction scores the image diagonal.
    """
    pred, gt = _pair(pred, gt)
    if not gt.any():
        raise ValueError("ground-truth mask is empty")
    if not pred.any():
        return float(np.hypot(*pred.shape))
    a = np.argwhere(boundary(pred)).astype(np.float64)
    b = np.argwhere(boundary(gt)).astype(np.float64)
    return float(max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0]))


@dataclass
class ImageScore:
    name: str
    dsc: float
    xor: float
    hm: float
    cluster: int


@dataclass
class MetricsReport:
    per_image: list[ImageScore] = field(default_factory=list)

    @property
    def mean(self) -> dict[str, float]:
        if not self.per_image:
            return {"dsc": float("nan"), "xor": float("nan"), "hm": float("nan")}
        return {k: float(np.mean([getattr(s, k) for s in self.per_image])) for k in ("dsc", "xor", "hm")}

    def to_dict(self) -> dict:
        return {"per_image": [vars(s) for s in self.per_image], "mean": self.mean}

    def summary(self) -> str:
        m = self.mean
        return f"DSC={m['dsc']:.1f} HM={m['hm']:.1f} XOR={m['xor']:.1f}"


def score(Y: np.ndarray, gt: np.ndarray, name: str = "") -> ImageScore:
    cluster, pred = best_overlap_cluster(Y, gt)
    return ImageScore(name, dice(pred, gt), xor_metric(pred, gt), hammoud_distance(pred, gt), cluster)


def pair_files(pred_dir, gt_dir, stems=None) -> list[tuple[str, Path, Path]]:
    """Match PNGs by stem; any unmatched file raises one error listing all of them."""
    preds = {p.stem: p for p in sorted(Path(pred_dir).glob("*.png"))}
    gts = {p.stem: p for p in sorted(Path(gt_dir).glob("*.png"))}
    if stems is not None:
        stems = set(stems)
        preds = {k: v for k, v in preds.items() if k in stems}
        gts = {k: v for k, v in gts.items() if k in stems}
    unmatched = sorted(set(preds) ^ set(gts))
    if unmatched:
        raise ValueError("unmatched files: " + ", ".join(unmatched))
    if not preds:
        raise ValueError(f"no PNG files to evaluate in {pred_dir} / {gt_dir}")
    return [(k, preds[k], gts[k]) for k in sorted(preds)]


def evaluate_dataset(pred_dir, gt_dir, stems=None) -> MetricsReport:
    """Best-overlap selection and all three metrics per image, in filename order."""
    from .io import load_label_map, load_mask

    report = MetricsReport()
    for name, p, g in pair_files(pred_dir, gt_dir, stems):
        report.per_image.append(score(load_label_map(p), load_mask(g), name))
    return report
