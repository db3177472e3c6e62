"""Seeded synthetic saliency task: bright shapes on a dim textured background."""

import logging
from dataclasses import dataclass

import numpy as np

from cascadeseg.autodiff.ops import resize_bilinear
from cascadeseg.errors import ConfigError, DatasetError

logger = logging.getLogger(__name__)

MIN_FOREGROUND = 0.05
MAX_FOREGROUND = 0.60
MAX_ATTEMPTS = 1000

SHAPE_LEVELS = np.array([0.6, 0.7, 0.8, 0.9, 1.0])
BACKGROUND_RANGE = (0.1, 0.4)
TEXTURE_GRID = 4
NOISE_STD = 0.04


@dataclass(frozen=True)
class SyntheticSample:
    image: np.ndarray  # (3, H, W) in [0, 1]
    mask: np.ndarray  # (H, W) in {0, 1}

    @property
    def foreground_fraction(self) -> float:
        return float(self.mask.mean())


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    coarse = rng.uniform(*BACKGROUND_RANGE, size=(TEXTURE_GRID, TEXTURE_GRID))
    smooth = resize_bilinear(coarse, size, size)
    return smooth[None] + rng.normal(0.0, NOISE_STD, size=(3, size, size))


def _shape_region(rng: np.random.Generator, size: int, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    cy, cx = rng.uniform(0.2, 0.8, size=2) * size
    ry, rx = rng.uniform(0.1, 0.3, size=2) * size
    if rng.integers(2) == 0:
        return (np.abs(ys - cy) <= ry) & (np.abs(xs - cx) <= rx)
    return ((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 <= 1.0


def _make_sample(rng: np.random.Generator, size: int) -> SyntheticSample:
    ys, xs = np.mgrid[0:size, 0:size] + 0.5
    for _ in range(MAX_ATTEMPTS):
        image = _background(rng, size)
        mask = np.zeros((size, size), dtype=bool)
        count = int(rng.integers(1, 3))
        levels = rng.choice(SHAPE_LEVELS, size=count, replace=False)
        for level in levels:
            region = _shape_region(rng, size, ys, xs)
            image[:, region] = level + rng.normal(0.0, NOISE_STD / 2, size=(3, int(region.sum())))
            mask |= region
        fraction = mask.mean()
        if MIN_FOREGROUND <= fraction <= MAX_FOREGROUND:
            return SyntheticSample(image=np.clip(image, 0.0, 1.0), mask=mask.astype(np.float64))
    raise DatasetError(f"could not draw a sample with foreground in [{MIN_FOREGROUND}, {MAX_FOREGROUND}]")


def synth_dataset(seed: int, count: int, image_size: int, stream: int = 0) -> list[SyntheticSample]:
    """``count`` samples fully determined by (seed, stream).

    Each sample gets its own child seed, so sample i does not depend on count.
    """
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    if image_size < 8:
        raise ConfigError(f"image_size must be >= 8, got {image_size}")
    children = np.random.SeedSequence([seed, stream]).spawn(count)
    samples = [_make_sample(np.random.default_rng(child), image_size) for child in children]
    logger.debug("Generated %d synthetic samples (seed=%d, stream=%d)", count, seed, stream)
    return samples
