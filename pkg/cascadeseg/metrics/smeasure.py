"""Structure measure: object-aware plus region-aware similarity."""

import numpy as np

from cascadeseg.metrics.base import MetricConfig, as_array, binarize, check_same_shape
from cascadeseg.network.model import SaliencyMap

EPS = np.spacing(1)


def combine_structure(s_object: float, s_region: float, gamma: float = 0.5) -> float:
    return gamma * s_object + (1.0 - gamma) * s_region


# ── Object-aware term ───────────────────────────────────────────────


def _object_similarity(values: np.ndarray) -> float:
    """2x/(x^2 + 1 + sigma) over the pixels of one gt region."""
    if values.size == 0:
        return 0.0
    x = float(values.mean())
    sigma = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + EPS)


def object_score(pred: np.ndarray, gt: np.ndarray) -> float:
    u = float(gt.mean())
    fg = _object_similarity(pred[gt])
    bg = _object_similarity(1.0 - pred[~gt])
    return u * fg + (1.0 - u) * bg


# ── Region-aware term ───────────────────────────────────────────────


def _centroid(gt: np.ndarray) -> tuple[int, int]:
    """Split point (x, y), one past the rounded foreground centroid."""
    h, w = gt.shape
    if not gt.any():
        return int(np.round(w / 2)) + 1, int(np.round(h / 2)) + 1
    y, x = np.argwhere(gt).mean(axis=0).round()
    return int(x) + 1, int(y) + 1


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    if n == 0:
        return 0.0
    g = gt.astype(np.float64)
    x = pred.mean()
    y = g.mean()
    denom = max(n - 1, 1)
    sigma_x = np.sum((pred - x) ** 2) / denom
    sigma_y = np.sum((g - y) ** 2) / denom
    sigma_xy = np.sum((pred - x) * (g - y)) / denom

    alpha = 4 * x * y * sigma_xy
    beta = (x ** 2 + y ** 2) * (sigma_x + sigma_y)
    if alpha != 0:
        return float(alpha / (beta + EPS))
    if beta == 0:
        return 1.0
    return 0.0


def region_score(pred: np.ndarray, gt: np.ndarray) -> float:
    h, w = gt.shape
    x, y = _centroid(gt)
    area = h * w
    w1 = x * y / area
    w2 = y * (w - x) / area
    w3 = (h - y) * x / area
    w4 = 1.0 - w1 - w2 - w3
    quadrants = (
        (slice(0, y), slice(0, x)),
        (slice(0, y), slice(x, w)),
        (slice(y, h), slice(0, x)),
        (slice(y, h), slice(x, w)),
    )
    scores = [_ssim(pred[q], gt[q]) for q in quadrants]
    return w1 * scores[0] + w2 * scores[1] + w3 * scores[2] + w4 * scores[3]


def s_measure(pred: "SaliencyMap | np.ndarray", gt: np.ndarray, cfg: MetricConfig | None = None) -> float:
    cfg = cfg or MetricConfig()
    p = as_array(pred)
    g = binarize(gt, cfg.gt_binarize)
    check_same_shape(p, g)

    ratio = g.mean()
    if ratio == 0:
        score = 1.0 - float(p.mean())
    elif ratio == 1:
        score = float(p.mean())
    else:
        score = combine_structure(object_score(p, g), region_score(p, g), cfg.gamma)
    return float(np.clip(score, 0.0, 1.0))
