"""Toy-scale training loop on the synthetic shapes task."""

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from cascadeseg.autodiff.tensor import backward
from cascadeseg.errors import TrainingDivergedError
from cascadeseg.metrics.base import MetricConfig
from cascadeseg.metrics.evaluator import MetricReport, evaluate_pair
from cascadeseg.network.model import forward, images_to_tensor
from cascadeseg.network.params import ModelParams, init_params
from cascadeseg.training.losses import total_loss
from cascadeseg.training.optimizer import OptimizerState, sgd_momentum_step
from cascadeseg.training.synthetic import SyntheticSample, synth_dataset
from cascadeseg.training.train_config import TrainConfig

logger = logging.getLogger(__name__)

TRAIN_STREAM = 0
HOLDOUT_STREAM = 1
SHUFFLE_STREAM = 2

LOSS_HEADER = ["iter", "total", "bce", "iou"]


@dataclass(frozen=True)
class LossRecord:
    iteration: int
    total: float
    bce: float
    iou: float


@dataclass
class TrainResult:
    params: ModelParams
    history: list[LossRecord] = field(default_factory=list)
    holdout: MetricReport | None = None

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.total for r in self.history], dtype=np.float64)

    @property
    def max_f(self) -> float:
        return self.holdout.max_f if self.holdout else float("nan")

    @property
    def mae(self) -> float:
        return self.holdout.mae if self.holdout else float("nan")

    @property
    def s_measure(self) -> float:
        return self.holdout.s_measure if self.holdout else float("nan")


def batch_indices(seed: int, pool: int, batch: int) -> Iterator[list[int]]:
    """Endless batches drawn from seeded shuffled passes over the pool."""
    rng = np.random.default_rng([seed, SHUFFLE_STREAM])
    queue: list[int] = []
    while True:
        while len(queue) < batch:
            queue.extend(int(i) for i in rng.permutation(pool))
        yield queue[:batch]
        queue = queue[batch:]


def _stack(samples: list[SyntheticSample]) -> tuple:
    image = images_to_tensor([s.image for s in samples])
    labels = np.stack([s.mask for s in samples])
    return image, labels


def evaluate_holdout(
    params: ModelParams, samples: list[SyntheticSample], metric_cfg: MetricConfig | None = None, batch: int = 4
) -> MetricReport:
    """Metrics of the current model on held-out samples."""
    metric_cfg = metric_cfg or MetricConfig()
    frozen = params.detached()
    records = []
    for start in range(0, len(samples), batch):
        chunk = samples[start:start + batch]
        image, _ = _stack(chunk)
        pred = forward(image, frozen.config, frozen)
        for offset, sample in enumerate(chunk):
            records.append(
                evaluate_pair(pred.array(offset), sample.mask, metric_cfg, name=f"holdout_{start + offset:04d}")
            )
    return MetricReport(records)


def train_toy(cfg: TrainConfig, metric_cfg: MetricConfig | None = None) -> TrainResult:
    """forward -> total_loss -> backward -> sgd_momentum_step, ``cfg.iterations`` times."""
    params = init_params(cfg.cascade, seed=cfg.seed)
    train_set = synth_dataset(cfg.seed, cfg.train_samples, cfg.image_size, stream=TRAIN_STREAM)
    holdout_set = synth_dataset(cfg.seed, cfg.holdout_samples, cfg.image_size, stream=HOLDOUT_STREAM)
    state = OptimizerState.zeros_like(params)
    batches = batch_indices(cfg.seed, len(train_set), cfg.batch)

    logger.info(
        "Training %d iterations: batch=%d size=%d params=%d lr=%g momentum=%g wd=%g",
        cfg.iterations, cfg.batch, cfg.image_size, params.num_values, cfg.lr, cfg.momentum, cfg.weight_decay,
    )
    history: list[LossRecord] = []
    start = time.monotonic()
    for iteration in range(1, cfg.iterations + 1):
        image, labels = _stack([train_set[i] for i in next(batches)])
        loss = total_loss(forward(image, cfg.cascade, params), labels)
        if not math.isfinite(loss.total):
            raise TrainingDivergedError(iteration, loss.total)

        backward(loss.tensor)
        params, state = sgd_momentum_step(params, params.grads(), state, cfg)
        history.append(LossRecord(iteration, loss.total, loss.bce, loss.iou))

        if iteration % cfg.log_every == 0 or iteration == cfg.iterations:
            recent = [r.total for r in history[-cfg.log_every:]]
            logger.info(
                "iter %d/%d loss=%.5f (bce=%.5f iou=%.5f) avg%d=%.5f %.1fs",
                iteration, cfg.iterations, loss.total, loss.bce, loss.iou,
                len(recent), sum(recent) / len(recent), time.monotonic() - start,
            )

    holdout = evaluate_holdout(params, holdout_set, metric_cfg, cfg.batch)
    logger.info("Held-out %s", holdout.summary())
    return TrainResult(params=params.detached(), history=history, holdout=holdout)


def write_loss_csv(path: str | Path, history: list[LossRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(LOSS_HEADER)
        for r in history:
            writer.writerow([r.iteration, repr(r.total), repr(r.bce), repr(r.iou)])
    return path
