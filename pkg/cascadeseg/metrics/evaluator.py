"""Per-image and directory-level evaluation of saliency predictions."""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cascadeseg.autodiff.ops import resize_bilinear
from cascadeseg.errors import DatasetError, ShapeError
from cascadeseg.imaging.masks import load_mask
from cascadeseg.metrics.base import MetricConfig, as_array, mae
from cascadeseg.metrics.fmeasure import FBetaCurve, f_beta_curve
from cascadeseg.metrics.smeasure import s_measure
from cascadeseg.network.model import SaliencyMap

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")
MEAN_ROW = "__mean__"
REPORT_HEADER = ["name", "maxF", "meanF", "mae", "smeasure"]
CURVE_HEADER = ["threshold", "precision", "recall", "fmeasure"]


@dataclass(frozen=True)
class ImageRecord:
    name: str
    max_f: float
    mean_f: float
    mae: float
    s_measure: float
    adaptive_f: float = 0.0
    curve: FBetaCurve | None = field(default=None, repr=False, compare=False)

    def row(self) -> list[str]:
        return [self.name] + [f"{v:.6f}" for v in (self.max_f, self.mean_f, self.mae, self.s_measure)]


@dataclass
class MetricReport:
    records: list[ImageRecord]

    @property
    def count(self) -> int:
        return len(self.records)

    def _mean(self, attr: str) -> float:
        if not self.records:
            return 0.0
        return float(np.mean([getattr(r, attr) for r in self.records]))

    @property
    def max_f(self) -> float:
        return self._mean("max_f")

    @property
    def mean_f(self) -> float:
        return self._mean("mean_f")

    @property
    def mae(self) -> float:
        return self._mean("mae")

    @property
    def s_measure(self) -> float:
        return self._mean("s_measure")

    @property
    def adaptive_f(self) -> float:
        return self._mean("adaptive_f")

    def summary(self) -> str:
        return (
            f"images={self.count} maxF={self.max_f:.6f} meanF={self.mean_f:.6f} "
            f"mae={self.mae:.6f} smeasure={self.s_measure:.6f}"
        )

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(REPORT_HEADER)
            for record in self.records:
                writer.writerow(record.row())
            writer.writerow(
                [MEAN_ROW] + [f"{v:.6f}" for v in (self.max_f, self.mean_f, self.mae, self.s_measure)]
            )
        return path

    def mean_curve(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        curves = [r.curve for r in self.records if r.curve is not None]
        if not curves:
            raise DatasetError("report holds no threshold curves")
        return (
            curves[0].thresholds,
            np.mean([c.precision for c in curves], axis=0),
            np.mean([c.recall for c in curves], axis=0),
            np.mean([c.fmeasure for c in curves], axis=0),
        )

    def curve_to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CURVE_HEADER)
            for row in zip(*self.mean_curve()):
                writer.writerow([f"{v:.6f}" for v in row])
        return path


def evaluate_pair(
    pred: "SaliencyMap | np.ndarray", gt: np.ndarray, cfg: MetricConfig | None = None, name: str = ""
) -> ImageRecord:
    cfg = cfg or MetricConfig()
    p = as_array(pred)
    curve = f_beta_curve(p, gt, cfg)
    return ImageRecord(
        name=name,
        max_f=curve.max_f,
        mean_f=curve.mean_f,
        mae=mae(p, gt),
        s_measure=s_measure(p, gt, cfg),
        adaptive_f=curve.adaptive_f,
        curve=curve,
    )


# ── Dataset layout ──────────────────────────────────────────────────


def list_images(directory: str | Path) -> dict[str, Path]:
    """Image files in a directory keyed by stem."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"{directory}: not a directory")
    found: dict[str, Path] = {}
    for path in sorted(directory.iterdir()):
        if not path.is_file() or path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        if path.stem in found:
            raise DatasetError(f"{directory}: duplicate image stem {path.stem!r}")
        found[path.stem] = path
    return found


def pair_files(pred_dir: str | Path, gt_dir: str | Path) -> list[tuple[str, Path, Path]]:
    preds = list_images(pred_dir)
    if not preds:
        raise DatasetError(f"{pred_dir}: no prediction files")
    gts = list_images(gt_dir)
    missing = sorted(set(preds) - set(gts))
    if missing:
        raise DatasetError(f"no ground truth for prediction(s): {', '.join(missing)}")
    extra = sorted(set(gts) - set(preds))
    if extra:
        logger.warning("Skipping %d ground-truth file(s) without a prediction: %s", len(extra), ", ".join(extra))
    return [(name, preds[name], gts[name]) for name in sorted(preds)]


def _evaluate_files(name: str, pred_path: Path, gt_path: Path, cfg: MetricConfig, strict_size: bool) -> ImageRecord:
    pred = load_mask(pred_path).to_unit()
    gt = load_mask(gt_path).to_unit()
    if pred.shape != gt.shape:
        if strict_size:
            raise ShapeError(f"{pred_path}: size {pred.shape} differs from ground truth {gt.shape}")
        logger.debug("Resizing %s from %s to %s", pred_path, pred.shape, gt.shape)
        pred = np.clip(resize_bilinear(pred, *gt.shape), 0.0, 1.0)
    return evaluate_pair(pred, gt, cfg, name=name)


def evaluate_dataset(
    pred_dir: str | Path,
    gt_dir: str | Path,
    cfg: MetricConfig | None = None,
    strict_size: bool = False,
    workers: int = 1,
) -> MetricReport:
    cfg = cfg or MetricConfig()
    pairs = pair_files(pred_dir, gt_dir)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda job: _evaluate_files(*job, cfg, strict_size), pairs))
    else:
        records = [_evaluate_files(*job, cfg, strict_size) for job in pairs]
    report = MetricReport(records)
    logger.info("Evaluated %s", report.summary())
    return report
