"""scikit-learn style wrapper around single-image training."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .config import RunConfig
from .trainer import segment, train_on_image


def check_image(X) -> np.ndarray:
    """(H, W) or (H, W, C) float array in [0, 1]."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.ndim != 3 or X.shape[2] not in (1, 3):
        raise ValueError(f"expected an (H, W) or (H, W, C) image with C in (1, 3), got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("image contains NaN or inf")
    if X.min() < 0.0 or X.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return X


class FuseNetSegmenter(BaseEstimator, ClusterMixin):
    """Unsupervised segmentation of one image into at most ``n_clusters`` regions.

    ``fit`` trains a fresh network on the image it is given; ``labels_`` is
    the final per-pixel cluster map.  The model works at the image's own
    resolution, which must be divisible by the patch size.

    Example::

        seg = FuseNetSegmenter(n_clusters=4, iterations=60).fit(img)
        mask = seg.labels_ == seg.labels_[32, 32]
    """

    def __init__(
        self,
        n_clusters=16,
        iterations=60,
        learning_rate=2e-3,
        feat_channels=64,
        token_dim=64,
        alpha=3.0,
        lambda1=2.5,
        lambda2=0.5,
        lambda3=0.5,
        temperature=0.5,
        beta=16,
        random_state=0,
    ):
        self.n_clusters = n_clusters
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.feat_channels = feat_channels
        self.token_dim = token_dim
        self.alpha = alpha
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lambda3 = lambda3
        self.temperature = temperature
        self.beta = beta
        self.random_state = random_state

    def _run_config(self, size: int) -> RunConfig:
        return RunConfig(
            image_size=size,
            clusters=self.n_clusters,
            iterations=self.iterations,
            learning_rate=self.learning_rate,
            feat_channels=self.feat_channels,
            token_dim=self.token_dim,
            alpha=self.alpha,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            lambda3=self.lambda3,
            temperature=self.temperature,
            beta=self.beta,
            seed=self.random_state,
        )

    def fit(self, X, y=None):
        X = check_image(X)
        h, w, c = X.shape
        if h != w:
            raise ValueError(f"square images only, got {h}x{w}")
        self.train_config_ = self._run_config(h).train_config(in_channels=c)
        self.params_, self.history_, self.labels_ = train_on_image(X, self.train_config_)
        self.n_features_in_ = c
        return self

    def predict(self, X):
        """Cluster map of ``X`` under the fitted weights (no further training)."""
        check_is_fitted(self, "params_")
        X = check_image(X)
        if X.shape[2] != self.n_features_in_:
            raise ValueError(f"fitted on {self.n_features_in_} channel(s), got {X.shape[2]}")
        return segment(X, self.params_, self.train_config_.model)
