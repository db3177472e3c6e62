"""Global information guidance and the cascaded top-down interaction.

A higher level is squeezed to a per-channel gate (sigmoid of its global
max) that recalibrates the level below it::

    G     = sigmoid(GMP(F_next))
    D_i   = R_outer(G * R_inner(F_i) + F_i)
    R(x)  = conv1x1(x) + x

``cascade`` runs ``q`` top-down passes of this module over the pyramid;
the top level has no higher neighbour and only gets its residual ``R``.
"""

import logging
from dataclasses import dataclass

from cascadeseg.autodiff.ops import add, conv2d, global_max_pool, mul, sigmoid
from cascadeseg.autodiff.tensor import Tensor
from cascadeseg.errors import ConfigError, ShapeError
from cascadeseg.network.encoder import FeaturePyramid
from cascadeseg.network.params import CascadeConfig, ModelParams, gigm_id, top_id

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GIGMPair:
    """Inner and outer 1x1 convs of one guidance module."""

    inner_weight: Tensor
    inner_bias: Tensor
    outer_weight: Tensor
    outer_bias: Tensor

    @classmethod
    def from_params(cls, params: ModelParams, pass_index: int, level: int) -> "GIGMPair":
        return cls(
            inner_weight=params[gigm_id(pass_index, level, "inner", "weight")],
            inner_bias=params[gigm_id(pass_index, level, "inner", "bias")],
            outer_weight=params[gigm_id(pass_index, level, "outer", "weight")],
            outer_bias=params[gigm_id(pass_index, level, "outer", "bias")],
        )

    @property
    def channels(self) -> int:
        return self.inner_weight.shape[0]


def residual(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """conv1x1(x) + x"""
    return add(conv2d(x, weight, bias), x)


def gigm_gate(f_next: Tensor) -> Tensor:
    return sigmoid(global_max_pool(f_next))


def gigm_fuse(f_i: Tensor, gate: Tensor, pair: GIGMPair) -> Tensor:
    n, c = f_i.shape[:2]
    if c != pair.channels:
        raise ShapeError(f"gigm_fuse: features have {c} channels, module expects {pair.channels}")
    if gate.shape != (n, c, 1, 1):
        raise ShapeError(f"gigm_fuse: gate must have shape {(n, c, 1, 1)}, got {gate.shape}")
    inner = residual(f_i, pair.inner_weight, pair.inner_bias)
    return residual(add(mul(inner, gate), f_i), pair.outer_weight, pair.outer_bias)


def cascade(pyramid: FeaturePyramid, cfg: CascadeConfig, params: ModelParams) -> tuple[Tensor, ...]:
    """Decoder features D_1..D_5 after ``cfg.q`` top-down passes.

    D_j depends on E_j..E_5 only.
    """
    if cfg.q < 1:
        raise ConfigError(f"cascade depth q must be >= 1, got {cfg.q}")
    if params.config.q < cfg.q:
        raise ConfigError(f"params hold {params.config.q} cascade passes, config asks for {cfg.q}")
    top = cfg.levels - 1

    current = list(pyramid.levels)
    for p in range(1, cfg.q + 1):
        updated: list[Tensor | None] = [None] * cfg.levels
        updated[top] = residual(current[top], params[top_id(p, "weight")], params[top_id(p, "bias")])
        for i in range(top - 1, -1, -1):
            gate = gigm_gate(updated[i + 1])
            updated[i] = gigm_fuse(current[i], gate, GIGMPair.from_params(params, p, i + 1))
        current = updated
    return tuple(current)
