"""Cascade configuration, parameter layout and initialization."""

import logging
from collections.abc import Iterator, Mapping
from dataclasses import dataclass

import numpy as np

from cascadeseg.autodiff.tensor import Tensor
from cascadeseg.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

IMAGE_CHANNELS = 3
PYRAMID_LEVELS = 5
DEFAULT_ENCODER_CHANNELS = (8, 16, 32, 64, 128)


@dataclass(frozen=True)
class CascadeConfig:
    """Cascade depth ``q``, unified width ``unified_channels`` and the toy encoder widths."""

    q: int = 2
    unified_channels: int = 32
    encoder_channels: tuple[int, ...] = DEFAULT_ENCODER_CHANNELS
    levels: int = PYRAMID_LEVELS

    def __post_init__(self):
        object.__setattr__(self, "encoder_channels", tuple(int(c) for c in self.encoder_channels))
        if self.q < 1:
            raise ConfigError(f"cascade depth q must be >= 1, got {self.q}")
        if self.unified_channels < 1:
            raise ConfigError(f"unified_channels must be >= 1, got {self.unified_channels}")
        if self.levels != PYRAMID_LEVELS:
            raise ConfigError(f"the pyramid has exactly {PYRAMID_LEVELS} levels, got {self.levels}")
        if len(self.encoder_channels) != PYRAMID_LEVELS:
            raise ConfigError(
                f"encoder_channels needs {PYRAMID_LEVELS} widths, got {len(self.encoder_channels)}"
            )
        if min(self.encoder_channels) < 1:
            raise ConfigError(f"encoder widths must be >= 1, got {self.encoder_channels}")

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "unified_channels": self.unified_channels,
            "encoder_channels": list(self.encoder_channels),
            "levels": self.levels,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CascadeConfig":
        return cls(
            q=int(data["q"]),
            unified_channels=int(data["unified_channels"]),
            encoder_channels=tuple(data["encoder_channels"]),
            levels=int(data.get("levels", PYRAMID_LEVELS)),
        )


# ── Parameter ids ──────────────────────────────────────────────────

def encoder_id(level: int, kind: str) -> str:
    return f"encoder.{level}.{kind}"


def unify_id(level: int, kind: str) -> str:
    return f"unify.{level}.{kind}"


def top_id(pass_index: int, kind: str) -> str:
    return f"cascade.{pass_index}.top.{kind}"


def gigm_id(pass_index: int, level: int, which: str, kind: str) -> str:
    return f"cascade.{pass_index}.level{level}.{which}.{kind}"


HEAD_WEIGHT = "head.weight"
HEAD_BIAS = "head.bias"


def _conv_shapes(c_out: int, c_in: int, k: int) -> tuple[tuple, tuple]:
    return (c_out, c_in, k, k), (1, c_out, 1, 1)


def param_shapes(cfg: CascadeConfig) -> dict[str, tuple[int, int, int, int]]:
    """Every parameter id mapped to its shape, in a stable order."""
    shapes: dict[str, tuple] = {}
    c_u = cfg.unified_channels

    c_prev = IMAGE_CHANNELS
    for level, c_enc in enumerate(cfg.encoder_channels, 1):
        shapes[encoder_id(level, "weight")], shapes[encoder_id(level, "bias")] = _conv_shapes(c_enc, c_prev, 3)
        c_prev = c_enc

    for level, c_enc in enumerate(cfg.encoder_channels, 1):
        shapes[unify_id(level, "weight")], shapes[unify_id(level, "bias")] = _conv_shapes(c_u, c_enc, 1)

    for p in range(1, cfg.q + 1):
        shapes[top_id(p, "weight")], shapes[top_id(p, "bias")] = _conv_shapes(c_u, c_u, 1)
        for level in range(cfg.levels - 1, 0, -1):
            for which in ("inner", "outer"):
                w_shape, b_shape = _conv_shapes(c_u, c_u, 1)
                shapes[gigm_id(p, level, which, "weight")] = w_shape
                shapes[gigm_id(p, level, which, "bias")] = b_shape

    shapes[HEAD_WEIGHT], shapes[HEAD_BIAS] = _conv_shapes(1, c_u, 3)
    return shapes


class ModelParams(Mapping):
    """Immutable, ordered mapping from parameter id to Tensor."""

    def __init__(self, config: CascadeConfig, tensors: Mapping[str, Tensor]):
        expected = param_shapes(config)
        missing = [pid for pid in expected if pid not in tensors]
        extra = [pid for pid in tensors if pid not in expected]
        if missing or extra:
            raise ShapeError(f"parameter ids do not match config: missing={missing} unexpected={extra}")
        for pid, shape in expected.items():
            if tensors[pid].shape != shape:
                raise ShapeError(f"parameter {pid} has shape {tensors[pid].shape}, expected {shape}")
        self.config = config
        self._tensors = {pid: tensors[pid] for pid in expected}

    def __getitem__(self, pid: str) -> Tensor:
        return self._tensors[pid]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    @property
    def num_values(self) -> int:
        return sum(t.data.size for t in self._tensors.values())

    def replace(self, updates: Mapping[str, "Tensor | np.ndarray"], requires_grad: bool | None = None) -> "ModelParams":
        """New params with some tensors swapped out."""
        tensors = dict(self._tensors)
        for pid, value in updates.items():
            if pid not in tensors:
                raise KeyError(f"unknown parameter id {pid!r}")
            if not isinstance(value, Tensor):
                flag = tensors[pid].requires_grad if requires_grad is None else requires_grad
                value = Tensor(value, requires_grad=flag)
            tensors[pid] = value
        return ModelParams(self.config, tensors)

    def with_grad(self) -> "ModelParams":
        """Fresh requires_grad leaves sharing the same values."""
        return ModelParams(
            self.config, {pid: Tensor(t.data, requires_grad=True) for pid, t in self._tensors.items()}
        )

    def detached(self) -> "ModelParams":
        return ModelParams(self.config, {pid: t.detach() for pid, t in self._tensors.items()})

    def grads(self) -> dict[str, np.ndarray | None]:
        return {pid: t.grad for pid, t in self._tensors.items()}

    def equals(self, other: "ModelParams") -> bool:
        """Bit-exact comparison of config and every value."""
        # byte comparison so that -0.0 and 0.0 differ
        return self.config == other.config and all(
            self[pid].shape == other[pid].shape and self[pid].data.tobytes() == other[pid].data.tobytes()
            for pid in self
        )


def is_residual_weight(pid: str) -> bool:
    """True for the 1x1 conv weights inside the cascade's residual operators."""
    return pid.startswith("cascade.") and pid.endswith(".weight")


def init_params(cfg: CascadeConfig, seed: int = 0, requires_grad: bool = True) -> ModelParams:
    """Fan-in scaled uniform weights in ±sqrt(6 / fan_in), zero biases.

    The 1x1 convs of the residual operators R(x) = conv1x1(x) + x start at
    zero, so every R is the identity and each guidance module reduces to
    (1 + G) * F at initialization.
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for pid, shape in param_shapes(cfg).items():
        if pid.endswith(".bias") or is_residual_weight(pid):
            values = np.zeros(shape, dtype=np.float64)
        else:
            fan_in = shape[1] * shape[2] * shape[3]
            bound = np.sqrt(6.0 / fan_in)
            values = rng.uniform(-bound, bound, size=shape)
        tensors[pid] = Tensor(values, requires_grad=requires_grad)
    params = ModelParams(cfg, tensors)
    logger.debug("Initialized %d parameter tensors (%d values), seed=%d", len(params), params.num_values, seed)
    return params
