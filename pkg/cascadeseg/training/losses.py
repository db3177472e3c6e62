"""Training objective: per-image BCE plus soft IoU, averaged over the batch."""

import logging
from dataclasses import dataclass, field

import numpy as np

from cascadeseg.autodiff.ops import add
from cascadeseg.autodiff.tensor import Tensor
from cascadeseg.errors import ShapeError
from cascadeseg.network.model import SaliencyMap

logger = logging.getLogger(__name__)

# p is clamped to [EPS, 1 - EPS] before taking logs
EPS = 1e-7


@dataclass(frozen=True)
class LossValue:
    total: float
    bce: float
    iou: float
    n: int
    tensor: Tensor = field(repr=False, compare=False)


def _probs(p: "SaliencyMap | Tensor") -> Tensor:
    return p.probs if isinstance(p, SaliencyMap) else p


def _labels(probs: Tensor, labels) -> np.ndarray:
    """Labels as an array shaped like the (N, 1, H, W) prediction."""
    values = labels.data if isinstance(labels, Tensor) else np.asarray(labels, dtype=np.float64)
    n, _, h, w = probs.shape
    if values.shape == probs.shape:
        return values
    if values.shape == (h, w) and n == 1:
        return values.reshape(probs.shape)
    if values.shape == (n, h, w):
        return values.reshape(probs.shape)
    raise ShapeError(f"label shape {values.shape} does not match prediction shape {probs.shape}")


def bce_loss(p: "SaliencyMap | Tensor", labels) -> Tensor:
    """-(1/n) sum[l log p + (1 - l) log(1 - p)] per image, then batch mean."""
    probs = _probs(p)
    l = _labels(probs, labels)
    n_img = probs.shape[0]
    n_pix = probs.data[0].size
    raw = probs.data
    clamped = np.clip(raw, EPS, 1.0 - EPS)
    inside = (raw >= EPS) & (raw <= 1.0 - EPS)

    per_pixel = -(l * np.log(clamped) + (1.0 - l) * np.log(1.0 - clamped))
    value = per_pixel.reshape(n_img, -1).mean(axis=1).mean()

    def backward_fn(grad: np.ndarray):
        local = -(l / clamped - (1.0 - l) / (1.0 - clamped)) / (n_pix * n_img)
        return (np.where(inside, local, 0.0) * grad.reshape(()),)

    return Tensor._from_op(
        np.array(value).reshape(1, 1, 1, 1), "bce_loss", (probs,), backward_fn, np.packbits(inside).tobytes()
    )


def iou_loss(p: "SaliencyMap | Tensor", labels) -> Tensor:
    """1 - sum(l p) / sum(l + p - l p) per image, then batch mean.

    An image where both p and l are all zero scores 0.
    """
    probs = _probs(p)
    l = _labels(probs, labels)
    n_img = probs.shape[0]
    raw = probs.data

    intersection = (l * raw).reshape(n_img, -1).sum(axis=1)
    union = (l + raw - l * raw).reshape(n_img, -1).sum(axis=1)
    nonempty = union > 0
    safe_union = np.where(nonempty, union, 1.0)
    per_image = np.where(nonempty, 1.0 - intersection / safe_union, 0.0)
    value = per_image.mean()

    def backward_fn(grad: np.ndarray):
        inter = intersection.reshape(n_img, 1, 1, 1)
        uni = safe_union.reshape(n_img, 1, 1, 1)
        local = -(l * uni - inter * (1.0 - l)) / uni**2
        local = np.where(nonempty.reshape(n_img, 1, 1, 1), local, 0.0) / n_img
        return (local * grad.reshape(()),)

    return Tensor._from_op(np.array(value).reshape(1, 1, 1, 1), "iou_loss", (probs,), backward_fn)


def total_loss(p: "SaliencyMap | Tensor", labels) -> LossValue:
    probs = _probs(p)
    bce = bce_loss(probs, labels)
    iou = iou_loss(probs, labels)
    total = add(bce, iou)
    return LossValue(
        total=total.item(),
        bce=bce.item(),
        iou=iou.item(),
        n=probs.data.size,
        tensor=total,
    )
