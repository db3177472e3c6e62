"""Toy strided-convolution pyramid encoder and per-level channel unification."""

import logging
from dataclasses import dataclass
from typing import Sequence

from cascadeseg.autodiff.ops import conv2d, relu
from cascadeseg.autodiff.tensor import Tensor
from cascadeseg.errors import ShapeError
from cascadeseg.network.params import (
    IMAGE_CHANNELS,
    PYRAMID_LEVELS,
    ModelParams,
    encoder_id,
    unify_id,
)

logger = logging.getLogger(__name__)

# total downsampling factor of the deepest level
INPUT_MULTIPLE = 2 ** PYRAMID_LEVELS


@dataclass(frozen=True)
class FeaturePyramid:
    """Levels E_1..E_5, each half the resolution of the previous one."""

    levels: tuple[Tensor, ...]

    def __post_init__(self):
        if len(self.levels) != PYRAMID_LEVELS:
            raise ShapeError(f"a feature pyramid has {PYRAMID_LEVELS} levels, got {len(self.levels)}")
        for i in range(1, PYRAMID_LEVELS):
            upper, lower = self.levels[i - 1].shape, self.levels[i].shape
            if (upper[2], upper[3]) != (2 * lower[2], 2 * lower[3]):
                raise ShapeError(
                    f"pyramid level {i + 1} extent {lower[2:]} is not half of level {i} extent {upper[2:]}"
                )

    def __getitem__(self, index: int) -> Tensor:
        return self.levels[index]

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(level.shape[1] for level in self.levels)


def check_input_extents(height: int, width: int) -> None:
    for name, extent in (("height", height), ("width", width)):
        if extent % INPUT_MULTIPLE != 0:
            raise ShapeError(f"input {name} {extent} is not divisible by {INPUT_MULTIPLE}")


def encode(image: Tensor, params: ModelParams) -> list[Tensor]:
    """Five stride-2 3x3 conv + relu stages; returns the raw pyramid."""
    n, c, h, w = image.shape
    if c != IMAGE_CHANNELS:
        raise ShapeError(f"encoder expects {IMAGE_CHANNELS} input channels, got {c}")
    check_input_extents(h, w)

    levels = []
    x = image
    for level in range(1, PYRAMID_LEVELS + 1):
        x = relu(conv2d(x, params[encoder_id(level, "weight")], params[encoder_id(level, "bias")], stride=2, padding=1))
        levels.append(x)
    return levels


def unify_channels(raw: Sequence[Tensor], params: ModelParams) -> FeaturePyramid:
    """Per-level 1x1 conv to the unified channel width."""
    if len(raw) != PYRAMID_LEVELS:
        raise ShapeError(f"expected {PYRAMID_LEVELS} raw pyramid levels, got {len(raw)}")
    unified = []
    for level, features in enumerate(raw, 1):
        weight = params[unify_id(level, "weight")]
        if features.shape[1] != weight.shape[1]:
            raise ShapeError(
                f"level {level} has {features.shape[1]} channels but its unify conv expects {weight.shape[1]}"
            )
        unified.append(conv2d(features, weight, params[unify_id(level, "bias")]))
    return FeaturePyramid(tuple(unified))
