"""Unsupervised single-image segmentation with a dual-stream network trained from scratch."""

from .augment import AugmentConfig, make_augmented_view
from .config import ConfigError, RunConfig
from .estimator import FuseNetSegmenter
from .losses import LossWeights, boundary_loss, clip_loss, clustering_ce, joint_loss
from .metrics import MetricsReport, best_overlap_cluster, dice, hammoud_distance, xor_metric
from .model import ModelConfig, forward, init_params
from .trainer import TrainConfig, TrainHistory, TrainingAborted, edge_map, segment, train_on_image

__all__ = [
    "AugmentConfig",
    "ConfigError",
    "FuseNetSegmenter",
    "LossWeights",
    "MetricsReport",
    "ModelConfig",
    "RunConfig",
    "TrainConfig",
    "TrainHistory",
    "TrainingAborted",
    "best_overlap_cluster",
    "boundary_loss",
    "clip_loss",
    "clustering_ce",
    "dice",
    "edge_map",
    "forward",
    "hammoud_distance",
    "init_params",
    "joint_loss",
    "make_augmented_view",
    "segment",
    "train_on_image",
    "xor_metric",
]
