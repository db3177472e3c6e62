import csv
import dataclasses

import numpy as np
import pytest

from cascadeseg.errors import TrainingDivergedError
from cascadeseg.network.params import CascadeConfig, init_params
from cascadeseg.training import trainer
from cascadeseg.training.train_config import TrainConfig
from cascadeseg.training.trainer import batch_indices, train_toy, write_loss_csv


@pytest.fixture
def small_cfg(tiny_cascade):
    return TrainConfig(
        iterations=3, batch=2, image_size=32, cascade=tiny_cascade, train_samples=4, holdout_samples=2, log_every=1
    )


def test_zero_iterations_keep_initialization(small_cfg):
    cfg = dataclasses.replace(small_cfg, iterations=0)
    result = train_toy(cfg)
    assert result.history == []
    assert result.params.equals(init_params(cfg.cascade, seed=cfg.seed))
    assert result.holdout.count == 2


def test_same_seed_same_run(small_cfg):
    a = train_toy(small_cfg)
    b = train_toy(small_cfg)
    assert a.history == b.history
    assert a.params.equals(b.params)
    assert a.max_f == b.max_f and a.mae == b.mae
    assert [r.iteration for r in a.history] == [1, 2, 3]
    assert all(np.isfinite(r.total) for r in a.history)
    assert all(r.total == pytest.approx(r.bce + r.iou, rel=1e-15) for r in a.history)


def test_training_moves_the_weights(small_cfg):
    result = train_toy(small_cfg)
    assert not result.params.equals(init_params(small_cfg.cascade, seed=small_cfg.seed))


def test_batches_cycle_through_shuffled_epochs():
    gen = batch_indices(seed=0, pool=5, batch=2)
    drawn = [i for _ in range(5) for i in next(gen)]
    assert sorted(drawn[:5]) == [0, 1, 2, 3, 4]
    assert sorted(drawn[5:10]) == [0, 1, 2, 3, 4]
    again = batch_indices(seed=0, pool=5, batch=2)
    assert [i for _ in range(5) for i in next(again)] == drawn


def test_non_finite_loss_aborts(small_cfg, monkeypatch):
    real_total_loss = trainer.total_loss
    calls = {"n": 0}

    def poisoned(p, labels):
        calls["n"] += 1
        value = real_total_loss(p, labels)
        if calls["n"] == 2:
            return value.__class__(float("nan"), value.bce, value.iou, value.n, value.tensor)
        return value

    monkeypatch.setattr(trainer, "total_loss", poisoned)
    with pytest.raises(TrainingDivergedError) as exc:
        train_toy(small_cfg)
    assert exc.value.iteration == 2


def test_loss_csv(tmp_path, small_cfg):
    result = train_toy(small_cfg)
    path = write_loss_csv(tmp_path / "out" / "loss.csv", result.history)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iter", "total", "bce", "iou"]
    assert len(rows) == 4
    assert float(rows[1][1]) == result.history[0].total


@pytest.mark.slow
def test_toy_training_converges():
    cfg = TrainConfig(iterations=200, batch=4, image_size=64, seed=0, cascade=CascadeConfig())
    assert (cfg.lr, cfg.momentum, cfg.weight_decay) == (0.005, 0.9, 5e-5)
    result = train_toy(cfg)
    losses = result.losses
    assert losses[-20:].mean() <= 0.5 * losses[:20].mean()
    assert result.holdout.count == 16
    assert result.max_f >= 0.85
    assert result.mae <= 0.08
