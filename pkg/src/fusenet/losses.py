"""Training objectives: self-labelling cross-entropy, image-image CLIP loss,
edge refinement loss and their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import Tensor

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 2.5  # clustering cross-entropy
    lambda2: float = 0.5  # CLIP
    lambda3: float = 0.5  # edge refinement
    temperature: float = 0.5
    beta: int = 16

    def __post_init__(self):
        lams = (self.lambda1, self.lambda2, self.lambda3)
        if min(lams) < 0:
            raise ValueError(f"loss weights must be nonnegative, got {lams}")
        if max(lams) == 0:
            raise ValueError("at least one loss weight must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.beta < 1:
            raise ValueError("beta must be a positive integer")

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(
            self.lambda1 * factor, self.lambda2 * factor, self.lambda3 * factor, self.temperature, self.beta
        )


def one_hot_argmax(P: np.ndarray) -> np.ndarray:
    idx = np.argmax(P, axis=-1)
    return np.eye(P.shape[-1])[idx]


def clustering_ce(P: Tensor, target: np.ndarray | None = None) -> Tensor:
    """Mean over pixels of -sum_k Y log P with Y = one-hot argmax of P.

    The target is a constant; pass ``target`` to reuse a frozen one.
    """
    if target is None:
        target = one_hot_argmax(P.data)
    h, w, _ = P.shape
    logp = nx.log(P, floor=LOG_FLOOR)
    return nx.tsum(logp * target) * (-1.0 / (h * w))


def _soft_ce(logits: Tensor, target: np.ndarray) -> Tensor:
    # mean over rows of -sum_j S_ij log softmax(L)_ij
    return nx.tsum(nx.log_softmax(logits, axis=1) * target) * (-1.0 / logits.shape[0])


def clip_target(I: np.ndarray, A: np.ndarray, temperature: float) -> np.ndarray:
    sim = (I @ I.T + A @ A.T) / (2.0 * temperature)
    sim = sim - sim.max(axis=1, keepdims=True)
    e = np.exp(sim)
    return e / e.sum(axis=1, keepdims=True)


def clip_loss(
    I: Tensor, A: Tensor, temperature: float = 0.5, tol: float = 1e-6, target: np.ndarray | None = None
) -> Tensor:
    """Symmetric contrastive loss between the image and augmented token sequences.

    The soft target is a constant computed from the current tokens; pass
    ``target`` to reuse a frozen one.
    """
    if I.shape != A.shape:
        raise ValueError(f"token sequences differ in shape: {I.shape} vs {A.shape}")
    for name, t in (("I", I), ("A", A)):
        norms = np.linalg.norm(t.data, axis=1)
        if np.any(np.abs(norms - 1.0) > tol):
            raise ValueError(f"rows of {name} are not L2-normalised (max deviation {np.abs(norms - 1).max():.2e})")
    if target is None:
        target = clip_target(I.data, A.data, temperature)
    logits = nx.matmul(I, nx.transpose(A)) * (1.0 / temperature)
    return (_soft_ce(logits, target) + _soft_ce(nx.transpose(logits), target.T)) * 0.5


def down_up(P: Tensor, beta: int) -> Tensor:
    h, w, _ = P.shape
    small = nx.resize_bilinear(P, max(1, h // beta), max(1, w // beta))
    return nx.resize_bilinear(small, h, w)


def boundary_loss(P: Tensor, beta: int = 16, sign: np.ndarray | None = None) -> Tensor:
    """Mean absolute gap between P and its down-then-up resampled copy.

    ``sign`` freezes the sign pattern of the residual (used by gradient checks
    so the kink of |.| is not straddled by finite differences).
    """
    h, w, k = P.shape
    if h < beta or w < beta:
        raise ValueError(f"map {h}x{w} is smaller than the downsampling factor {beta}")
    resid = down_up(P, beta) - P
    mag = nx.tabs(resid) if sign is None else resid * sign
    return nx.tsum(mag) * (1.0 / (h * w * k))


def joint_loss(
    P: Tensor,
    I: Tensor,
    A: Tensor,
    weights: LossWeights = LossWeights(),
    target: np.ndarray | None = None,
    edge_sign: np.ndarray | None = None,
    clip_targets: np.ndarray | None = None,
) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of the three terms plus the weighted per-term values.

    Terms with a zero weight are skipped and reported as exactly 0.
    ``target``, ``edge_sign`` and ``clip_targets`` freeze the data-dependent
    constants of the three terms (for gradient checks).
    """
    terms: dict[str, Tensor | None] = {"ce": None, "clip": None, "boundary": None}
    if weights.lambda1:
        terms["ce"] = clustering_ce(P, target) * weights.lambda1
    if weights.lambda2:
        terms["clip"] = clip_loss(I, A, weights.temperature, target=clip_targets) * weights.lambda2
    if weights.lambda3:
        terms["boundary"] = boundary_loss(P, weights.beta, edge_sign) * weights.lambda3
    total = None
    for t in terms.values():
        if t is not None:
            total = t if total is None else total + t
    breakdown = {name: (0.0 if t is None else t.item()) for name, t in terms.items()}
    breakdown["joint"] = total.item()
    return total, breakdown
