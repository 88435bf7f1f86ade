"""Per-image self-supervised optimisation loop."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .augment import AugmentConfig, make_augmented_view
from .losses import LossWeights, joint_loss
from .model import ModelConfig, Params, forward, init_params, predict_segmentation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    iterations: int = 60
    learning_rate: float = 2e-3
    optimizer: str = "adam"
    seed: int = 0
    min_clusters: int = 2
    emit_every: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.min_clusters < 2:
            raise ValueError("min_clusters must be >= 2")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class IterationRecord:
    iteration: int
    joint: float
    ce: float
    clip: float
    boundary: float
    clusters: int


@dataclass
class TrainHistory:
    records: list[IterationRecord] = field(default_factory=list)
    stopped_early: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r)) + "\n" for r in self.records)

    def write_jsonl(self, path) -> None:
        Path(path).write_text(self.to_jsonl())


class TrainingAborted(RuntimeError):
    pass


class Adam:
    def __init__(self, params: Params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1 - b1**self.t, 1 - b2**self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            p.data = p.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class SGD:
    def __init__(self, params: Params, lr: float):
        self.params, self.lr = params, lr

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            p.data = p.data - self.lr * grads[k]


def _snapshot(params: Params) -> dict[str, np.ndarray]:
    return {k: p.data.copy() for k, p in params.items()}


def _restore(params: Params, snap: dict[str, np.ndarray]) -> None:
    for k, p in params.items():
        p.data = snap[k]


def _as_image(img, cfg: ModelConfig) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    expected = (*cfg.image_size, cfg.in_channels)
    if img.shape != expected:
        raise ValueError(f"image has shape {img.shape}, model expects {expected}")
    return img


def train_on_image(img, cfg: TrainConfig = TrainConfig(), out_dir=None):
    """Fit a fresh parameter set to one image.

    Returns ``(params, history, Y)``.  Stops early when the prediction
    collapses below ``min_clusters`` distinct clusters; the returned
    parameters and map are then those of the last non-degenerate iteration.
    """
    mcfg = cfg.model
    img = _as_image(img, mcfg)
    aug_rng = np.random.default_rng(cfg.augment.seed)
    aug = make_augmented_view(img, cfg.augment, aug_rng)
    params = init_params(mcfg, cfg.seed)
    opt = Adam(params, cfg.learning_rate) if cfg.optimizer == "adam" else SGD(params, cfg.learning_rate)
    history = TrainHistory()
    prev: tuple[dict[str, np.ndarray], np.ndarray] | None = None

    for it in range(1, cfg.iterations + 2):
        final = it == cfg.iterations + 1
        if cfg.augment.resample_each_iteration and 1 < it and not final:
            aug = make_augmented_view(img, cfg.augment, aug_rng)
        out = forward(img, aug, params, mcfg)
        Y = predict_segmentation(out.P)
        n_clusters = int(np.unique(Y).size)
        if n_clusters < cfg.min_clusters and prev is not None:
            logger.info("collapse to %d cluster(s) at iteration %d; stopping", n_clusters, it)
            _restore(params, prev[0])
            history.stopped_early = True
            return params, history, prev[1]
        if final:
            return params, history, Y

        loss, terms = joint_loss(out.P, out.I, out.A, cfg.weights)
        bad = [k for k in ("ce", "clip", "boundary", "joint") if not math.isfinite(terms[k])]
        if bad:
            raise TrainingAborted(f"non-finite {bad[0]} loss at iteration {it}")
        history.records.append(IterationRecord(it, terms["joint"], terms["ce"], terms["clip"], terms["boundary"], n_clusters))
        if out_dir is not None and cfg.emit_every and (it == 1 or it % cfg.emit_every == 0):
            emit_iteration_artifacts(Y, it, out_dir, cfg.weights.beta, mcfg.num_clusters)

        prev = (_snapshot(params), Y)
        opt.step(nx.backward(loss, params))
    raise AssertionError("unreachable")


def segment(img, params: Params, cfg: ModelConfig) -> np.ndarray:
    """Inference pass with the image itself as the second view."""
    img = _as_image(img, cfg)
    return predict_segmentation(forward(img, img, params, cfg).P)


def edge_map(Y: np.ndarray, beta: int, num_clusters: int | None = None) -> np.ndarray:
    """Pixels where the one-hot map differs from its down-then-up resampled copy."""
    Y = np.asarray(Y)
    k = int(Y.max()) + 1 if num_clusters is None else num_clusters
    onehot = np.eye(k)[Y]
    h, w = Y.shape
    small = nx.resize_bilinear_array(onehot, max(1, h // beta), max(1, w // beta))
    back = nx.resize_bilinear_array(small, h, w)
    return np.any(np.abs(back - onehot) > 0, axis=2)


def emit_iteration_artifacts(Y: np.ndarray, iteration: int, out_dir, beta: int = 16, num_clusters: int | None = None):
    """Write ``iter_{n}_clusters.png`` and ``iter_{n}_edges.png`` into ``out_dir``."""
    from .io import save_binary_png, save_indexed_png

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create artifact directory {out_dir}: {exc}") from exc
    clusters = out_dir / f"iter_{iteration}_clusters.png"
    edges = out_dir / f"iter_{iteration}_edges.png"
    save_indexed_png(Y, clusters)
    save_binary_png(edge_map(Y, beta, num_clusters), edges)
    return clusters, edges
