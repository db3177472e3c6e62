"""Optimizer and training-loop settings."""

from dataclasses import dataclass, field

from cascadeseg.errors import ConfigError
from cascadeseg.network.encoder import INPUT_MULTIPLE
from cascadeseg.network.params import CascadeConfig


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.005
    momentum: float = 0.9
    weight_decay: float = 5e-5
    iterations: int = 200
    batch: int = 4
    seed: int = 0
    image_size: int = 64
    cascade: CascadeConfig = field(default_factory=CascadeConfig)
    train_samples: int = 64
    holdout_samples: int = 16
    log_every: int = 20

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if self.image_size < INPUT_MULTIPLE or self.image_size % INPUT_MULTIPLE:
            raise ConfigError(f"image_size must be a positive multiple of {INPUT_MULTIPLE}, got {self.image_size}")
        if self.train_samples < 1 or self.holdout_samples < 1:
            raise ConfigError("train_samples and holdout_samples must be >= 1")
        if self.log_every < 1:
            raise ConfigError(f"log_every must be >= 1, got {self.log_every}")
