"""Flat ``key = value`` run configuration shared by the CLI commands.

Blank lines and ``#`` comments are ignored.  Every key must name a field of
:class:`RunConfig`; anything else is rejected with the file and line number.
Command-line flags are applied on top of the file.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .augment import AugmentConfig
from .losses import LossWeights
from .model import ModelConfig
from .trainer import TrainConfig

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # model
    image_size: int = 256
    feat_channels: int = 64
    token_dim: int = 64
    clusters: int = 16
    alpha: float = 3.0
    patch_size: int = 0  # 0 -> image_size // 8
    head_init_scale: float = 0.01
    # training
    iterations: int = 60
    learning_rate: float = 2e-3
    optimizer: str = "adam"
    seed: int = 0
    min_clusters: int = 2
    emit_every: int = 0
    # loss
    lambda1: float = 2.5
    lambda2: float = 0.5
    lambda3: float = 0.5
    temperature: float = 0.5
    beta: int = 16
    # augmentation
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    blur_sigma_min: float = 0.1
    blur_sigma_max: float = 2.0
    blur_kernel_size: int = 5
    augment_seed: int = -1  # -1 -> same as seed
    resample_augment: bool = False
    # output
    foreground: str = "largest"

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls().update(parse_file(path))

    def update(self, values: dict) -> "RunConfig":
        """New config with ``values`` applied; ``None`` values are skipped."""
        types = {f.name: f.type for f in fields(self)}
        unknown = sorted(set(values) - set(types))
        if unknown:
            raise ConfigError("unknown config key(s): " + ", ".join(unknown))
        changes = {k: _coerce(k, v, types[k]) for k, v in values.items() if v is not None}
        return replace(self, **changes)

    def train_config(self, in_channels: int = 3) -> TrainConfig:
        """Build the nested trainer configuration; raises ``ValueError`` on bad values."""
        model = ModelConfig(
            image_size=(self.image_size, self.image_size),
            in_channels=in_channels,
            feat_channels=self.feat_channels,
            token_dim=self.token_dim,
            num_clusters=self.clusters,
            alpha=self.alpha,
            patch_size=self.patch_size or None,
            head_init_scale=self.head_init_scale,
        )
        weights = LossWeights(self.lambda1, self.lambda2, self.lambda3, self.temperature, self.beta)
        augment = AugmentConfig(
            brightness=self.brightness,
            contrast=self.contrast,
            saturation=self.saturation,
            blur_sigma=(self.blur_sigma_min, self.blur_sigma_max),
            blur_kernel_size=self.blur_kernel_size,
            seed=self.seed if self.augment_seed < 0 else self.augment_seed,
            resample_each_iteration=self.resample_augment,
        )
        return TrainConfig(
            model=model,
            weights=weights,
            augment=augment,
            iterations=self.iterations,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            seed=self.seed,
            min_clusters=self.min_clusters,
            emit_every=self.emit_every,
        )


def _coerce(key: str, value, typ: str):
    if not isinstance(value, str):
        return value
    text = value.strip()
    try:
        if typ == "int":
            return int(text)
        if typ == "float":
            return float(text)
        if typ == "bool":
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {typ}") from None
    return text


def parse_file(path) -> dict[str, str]:
    """Raw ``key -> value`` strings from a config file."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    known = set(RunConfig.keys())
    out: dict[str, str] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = value.strip()
    return out
