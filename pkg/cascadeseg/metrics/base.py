"""Shared metric configuration and per-pixel helpers."""

from dataclasses import dataclass

import numpy as np

from cascadeseg.errors import ConfigError, ShapeError
from cascadeseg.network.model import SaliencyMap


@dataclass(frozen=True)
class MetricConfig:
    beta2: float = 0.3
    gamma: float = 0.5
    num_thresholds: int = 256
    gt_binarize: float = 0.5

    def __post_init__(self):
        if not self.beta2 > 0:
            raise ConfigError(f"beta2 must be > 0, got {self.beta2}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.num_thresholds < 2:
            raise ConfigError(f"thresholds must be >= 2, got {self.num_thresholds}")
        if not 0.0 < self.gt_binarize <= 1.0:
            raise ConfigError(f"gt_binarize must lie in (0, 1], got {self.gt_binarize}")

    @property
    def thresholds(self) -> np.ndarray:
        """Uniform levels 0, 1/(n-1), ..., 1."""
        return np.linspace(0.0, 1.0, self.num_thresholds)


def as_array(pred: "SaliencyMap | np.ndarray") -> np.ndarray:
    """(H, W) float64 view of a single-image prediction."""
    if isinstance(pred, SaliencyMap):
        if pred.batch != 1:
            raise ShapeError(f"expected a single saliency map, got a batch of {pred.batch}")
        return pred.array(0)
    array = np.asarray(pred, dtype=np.float64)
    if array.ndim != 2:
        raise ShapeError(f"expected an (H, W) map, got shape {array.shape}")
    return array


def check_same_shape(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")


def binarize(gt: np.ndarray, threshold: float) -> np.ndarray:
    return np.asarray(gt) >= threshold


def mae(pred: "SaliencyMap | np.ndarray", gt: np.ndarray) -> float:
    """Mean absolute per-pixel difference."""
    p = as_array(pred)
    g = np.asarray(gt, dtype=np.float64)
    check_same_shape(p, g)
    return float(np.mean(np.abs(p - g)))
