"""Threshold-swept precision, recall and F-beta."""

from dataclasses import dataclass

import numpy as np

from cascadeseg.metrics.base import MetricConfig, as_array, binarize, check_same_shape
from cascadeseg.network.model import SaliencyMap


@dataclass(frozen=True)
class FBetaCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    fmeasure: np.ndarray
    adaptive_f: float

    @property
    def max_f(self) -> float:
        return float(self.fmeasure.max())

    @property
    def mean_f(self) -> float:
        return float(self.fmeasure.mean())


def f_beta(precision, recall, beta2: float):
    """(1 + b2) P R / (b2 P + R), zero wherever the denominator is zero.

    Works elementwise on arrays and returns a float for scalar input.
    """
    p = np.asarray(precision, dtype=np.float64)
    r = np.asarray(recall, dtype=np.float64)
    denom = beta2 * p + r
    safe = np.where(denom > 0, denom, 1.0)
    f = np.where(denom > 0, (1.0 + beta2) * p * r / safe, 0.0)
    return float(f) if f.ndim == 0 else f


def _precision_recall(tp, predicted, positives: int):
    predicted = np.asarray(predicted, dtype=np.float64)
    tp = np.asarray(tp, dtype=np.float64)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = tp / positives if positives > 0 else np.zeros_like(tp)
    return precision, recall


def f_beta_curve(pred: "SaliencyMap | np.ndarray", gt: np.ndarray, cfg: MetricConfig | None = None) -> FBetaCurve:
    cfg = cfg or MetricConfig()
    p = as_array(pred)
    g = binarize(gt, cfg.gt_binarize)
    check_same_shape(p, g)
    thresholds = cfg.thresholds

    # Count pixels >= t by binary search over sorted values.
    fg_sorted = np.sort(p[g])
    all_sorted = np.sort(p, axis=None)
    tp = fg_sorted.size - np.searchsorted(fg_sorted, thresholds, side="left")
    predicted = all_sorted.size - np.searchsorted(all_sorted, thresholds, side="left")
    positives = int(g.sum())
    precision, recall = _precision_recall(tp, predicted, positives)
    fmeasure = f_beta(precision, recall, cfg.beta2)

    adaptive = min(2.0 * float(p.mean()), 1.0)
    hits = p >= adaptive
    a_prec, a_rec = _precision_recall(np.sum(hits & g), np.sum(hits), positives)
    return FBetaCurve(
        thresholds=thresholds,
        precision=precision,
        recall=recall,
        fmeasure=np.atleast_1d(fmeasure),
        adaptive_f=float(f_beta(a_prec, a_rec, cfg.beta2)),
    )
