"""SGD with classic momentum and L2 weight decay folded into the gradient."""

import logging
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from cascadeseg.autodiff.tensor import Tensor
from cascadeseg.errors import MissingGradientError, ShapeError
from cascadeseg.network.params import ModelParams
from cascadeseg.training.train_config import TrainConfig

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    velocity: dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, params: Mapping[str, Tensor]) -> "OptimizerState":
        return cls({pid: np.zeros(t.shape, dtype=np.float64) for pid, t in params.items()})


def sgd_momentum_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray | None],
    state: OptimizerState,
    cfg: TrainConfig,
) -> tuple[Mapping[str, Tensor], OptimizerState]:
    """v <- momentum * v + (g + wd * w);  w <- w - lr * v

    Returns new params of the same kind as ``params`` and the new state.
    """
    updated: dict[str, Tensor] = {}
    velocity: dict[str, np.ndarray] = {}
    for pid, tensor in params.items():
        grad = grads.get(pid)
        if grad is None:
            raise MissingGradientError(pid)
        if grad.shape != tensor.shape:
            raise ShapeError(f"gradient for {pid} has shape {grad.shape}, parameter is {tensor.shape}")
        w = tensor.data
        v = cfg.momentum * state.velocity[pid] + (grad + cfg.weight_decay * w)
        velocity[pid] = v
        updated[pid] = Tensor(w - cfg.lr * v, requires_grad=tensor.requires_grad)

    if isinstance(params, ModelParams):
        return params.replace(updated), OptimizerState(velocity)
    return updated, OptimizerState(velocity)
