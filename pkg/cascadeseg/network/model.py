"""End-to-end forward pass: encoder -> unify -> cascade -> prediction head."""

import logging
from dataclasses import dataclass

import numpy as np

from cascadeseg.autodiff.ops import conv2d, sigmoid, upsample_bilinear
from cascadeseg.autodiff.tensor import Tensor
from cascadeseg.errors import ConfigError, ShapeError
from cascadeseg.network.encoder import encode, unify_channels
from cascadeseg.network.gigm import cascade
from cascadeseg.network.params import HEAD_BIAS, HEAD_WEIGHT, CascadeConfig, ModelParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SaliencyMap:
    """Per-pixel foreground probabilities, stored as an (N, 1, H, W) tensor."""

    probs: Tensor

    def __post_init__(self):
        if self.probs.shape[1] != 1:
            raise ShapeError(f"saliency maps are single-channel, got {self.probs.shape[1]} channels")

    @property
    def batch(self) -> int:
        return self.probs.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape[2], self.probs.shape[3]

    def array(self, index: int = 0) -> np.ndarray:
        """(H, W) map of one image, read-only."""
        return self.probs.data[index, 0]

    def arrays(self) -> list[np.ndarray]:
        return [self.array(i) for i in range(self.batch)]


def predict_head(d_1: Tensor, params: ModelParams, out_h: int, out_w: int) -> SaliencyMap:
    """3x3 conv to one channel, bilinear upsample, sigmoid."""
    h, w = d_1.shape[2:]
    if (2 * h, 2 * w) != (out_h, out_w):
        raise ShapeError(f"head input {h}x{w} is not at stride 2 of the target {out_h}x{out_w}")
    logits = conv2d(d_1, params[HEAD_WEIGHT], params[HEAD_BIAS], stride=1, padding=1)
    return SaliencyMap(sigmoid(upsample_bilinear(logits, out_h, out_w)))


def forward(image: Tensor, cfg: CascadeConfig, params: ModelParams) -> SaliencyMap:
    if cfg != params.config:
        raise ConfigError(f"cascade config {cfg} does not match the parameters' config {params.config}")
    h, w = image.shape[2:]
    raw = encode(image, params)
    pyramid = unify_channels(raw, params)
    decoded = cascade(pyramid, cfg, params)
    return predict_head(decoded[0], params, h, w)


def images_to_tensor(images: list[np.ndarray] | np.ndarray) -> Tensor:
    """Stack (3, H, W) images into an (N, 3, H, W) constant tensor."""
    return Tensor(np.stack([np.asarray(im, dtype=np.float64) for im in images]))
