"""Gradient suites: every differentiable op and the full model loss."""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from cascadeseg.autodiff import ops
from cascadeseg.autodiff.gradcheck import DEFAULT_STEP, GradCheckResult, gradcheck_details
from cascadeseg.autodiff.tensor import Tensor
from cascadeseg.errors import ConfigError
from cascadeseg.network.model import forward, images_to_tensor
from cascadeseg.network.params import CascadeConfig, ModelParams, init_params, is_residual_weight
from cascadeseg.training.losses import bce_loss, iou_loss, total_loss
from cascadeseg.training.synthetic import synth_dataset

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-4
BIAS_SCALE = 0.1


@dataclass
class GradCheckReport:
    """Per-parameter results merged over every checked instance."""

    per_param: dict[str, GradCheckResult] = field(default_factory=dict)
    instances: int = 0

    def record(self, pid: str, result: GradCheckResult) -> None:
        previous = self.per_param.get(pid)
        if previous is None:
            self.per_param[pid] = result
            return
        worse = result if result.max_rel_error > previous.max_rel_error else previous
        self.per_param[pid] = GradCheckResult(
            max_rel_error=worse.max_rel_error,
            checked=previous.checked + result.checked,
            skipped=previous.skipped + result.skipped,
            worst_index=worse.worst_index,
        )

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.per_param.values()), default=0.0)

    @property
    def worst_param(self) -> str | None:
        if not self.per_param:
            return None
        return max(self.per_param, key=lambda pid: self.per_param[pid].max_rel_error)

    @property
    def checked(self) -> int:
        return sum(r.checked for r in self.per_param.values())

    @property
    def skipped(self) -> int:
        return sum(r.skipped for r in self.per_param.values())

    def passed(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.checked > 0 and self.max_rel_error < tolerance


# ── Per-op suite ────────────────────────────────────────────────────


def _projected(op: Callable[[Tensor], Tensor], weights: np.ndarray) -> Callable[[Tensor], Tensor]:
    """Scalar f(x) = sum(op(x) * R) for a fixed random projection R."""
    r = Tensor(weights)
    return lambda x: ops.reduce_sum(ops.mul(op(x), r))


def _conv_cases(rng: np.random.Generator, k: int, stride: int, padding: int):
    n, c_in, c_out = 2, int(rng.integers(1, 4)), int(rng.integers(1, 4))
    h, w = int(rng.integers(k, 9)), int(rng.integers(k, 9))
    x = rng.normal(size=(n, c_in, h, w))
    weight = rng.normal(size=(c_out, c_in, k, k))
    bias = rng.normal(size=(1, c_out, 1, 1))
    out_shape = ops.conv2d(Tensor(x), Tensor(weight), Tensor(bias), stride, padding).shape
    r = rng.normal(size=out_shape)

    def conv(xv, wv, bv):
        return ops.conv2d(xv, wv, bv, stride=stride, padding=padding)

    return [
        (x, _projected(lambda t: conv(t, Tensor(weight), Tensor(bias)), r)),
        (weight, _projected(lambda t: conv(Tensor(x), t, Tensor(bias)), r)),
        (bias, _projected(lambda t: conv(Tensor(x), Tensor(weight), t), r)),
    ]


def _op_cases(name: str, rng: np.random.Generator):
    """(input, scalar function) pairs for one seeded instance of an op."""
    shape = (2, int(rng.integers(1, 4)), int(rng.integers(2, 9)), int(rng.integers(2, 9)))
    a = rng.normal(size=shape)
    if name == "conv2d1x1":
        return _conv_cases(rng, 1, 1, 0)
    if name == "conv2d3x3":
        return _conv_cases(rng, 3, 1, 1)
    if name == "conv2d3x3_stride2":
        return _conv_cases(rng, 3, 2, 1)
    if name == "global_max_pool":
        return [(a, _projected(ops.global_max_pool, rng.normal(size=shape[:2] + (1, 1))))]
    if name == "upsample_bilinear":
        out_h, out_w = shape[2] * 2, shape[3] + int(rng.integers(0, 5))
        r = rng.normal(size=shape[:2] + (out_h, out_w))
        return [(a, _projected(lambda t: ops.upsample_bilinear(t, out_h, out_w), r))]
    if name in ("sigmoid", "relu"):
        fn = ops.sigmoid if name == "sigmoid" else ops.relu
        return [(a, _projected(fn, rng.normal(size=shape)))]
    if name in ("add", "mul"):
        fn = ops.add if name == "add" else ops.mul
        b = rng.normal(size=shape)
        gate = rng.normal(size=shape[:2] + (1, 1))
        r = rng.normal(size=shape)
        return [
            (a, _projected(lambda t: fn(t, Tensor(b)), r)),
            (b, _projected(lambda t: fn(Tensor(a), t), r)),
            (gate, _projected(lambda t: fn(Tensor(a), t), r)),
        ]
    if name == "reduce_sum":
        return [(a, ops.reduce_sum)]
    if name in ("bce_loss", "iou_loss"):
        fn = bce_loss if name == "bce_loss" else iou_loss
        probs = rng.uniform(0.1, 0.9, size=(shape[0], 1) + shape[2:])
        labels = (rng.uniform(size=probs.shape) > 0.5).astype(np.float64)
        return [(probs, lambda t: fn(t, labels))]
    raise ValueError(f"unknown op {name!r}")


OP_NAMES = (
    "conv2d1x1",
    "conv2d3x3",
    "conv2d3x3_stride2",
    "global_max_pool",
    "upsample_bilinear",
    "sigmoid",
    "relu",
    "add",
    "mul",
    "reduce_sum",
    "bce_loss",
    "iou_loss",
)


def run_op_suite(seed: int = 0, instances: int = 20, h: float = DEFAULT_STEP) -> dict[str, float]:
    """Worst relative error per op over ``instances`` seeded random inputs."""
    results = {}
    for op_index, name in enumerate(OP_NAMES):
        worst = 0.0
        for child in np.random.SeedSequence([seed, op_index]).spawn(instances):
            for x, f in _op_cases(name, np.random.default_rng(child)):
                worst = max(worst, gradcheck_details(f, Tensor(x), h).max_rel_error)
        results[name] = worst
        logger.debug("op %s: max relative error %.3e over %d instances", name, worst, instances)
    return results


# ── Full-model suite ────────────────────────────────────────────────

MODEL_STREAM = 3
RESIDUAL_SCALE = 0.05


def _check_params(cfg: CascadeConfig, seed: int) -> ModelParams:
    """Initialized params with small random biases and residual weights.

    Freshly initialized residual convs are zero; drawing them here makes the
    check exercise the conv path of every residual operator.
    """
    params = init_params(cfg, seed=seed, requires_grad=False)
    rng = np.random.default_rng([seed, 1])
    updates = {}
    for pid, t in params.items():
        if pid.endswith(".bias"):
            updates[pid] = rng.normal(0.0, BIAS_SCALE, size=t.shape)
        elif is_residual_weight(pid):
            updates[pid] = rng.normal(0.0, RESIDUAL_SCALE, size=t.shape)
    return params.replace(updates, requires_grad=False)


def _instance_seeds(seed: int, instances: int) -> list[int]:
    children = np.random.SeedSequence([seed, MODEL_STREAM]).spawn(instances)
    return [int(child.generate_state(1)[0]) for child in children]


def _check_instance(
    cfg: CascadeConfig,
    instance_seed: int,
    image_size: int,
    h: float,
    max_coords: int | None,
    richardson: bool,
    report: GradCheckReport,
) -> None:
    sample = synth_dataset(instance_seed, 1, image_size, stream=MODEL_STREAM)[0]
    image = images_to_tensor([sample.image])
    labels = sample.mask
    params = _check_params(cfg, instance_seed)

    for index, pid in enumerate(params):
        def f(t: Tensor, pid=pid) -> Tensor:
            return total_loss(forward(image, cfg, params.replace({pid: t})), labels).tensor

        result = gradcheck_details(
            f, params[pid], h, richardson=richardson, max_coords=max_coords, seed=instance_seed + index
        )
        report.record(pid, result)
        logger.debug(
            "%s: max rel %.3e (%d checked, %d skipped)", pid, result.max_rel_error, result.checked, result.skipped
        )
    report.instances += 1


def check_model_gradients(
    cfg: CascadeConfig,
    seed: int = 0,
    image_size: int = 32,
    h: float = DEFAULT_STEP,
    max_coords: int | None = 2,
    richardson: bool = True,
    instances: int = 20,
) -> GradCheckReport:
    """Finite-difference check of d(total loss)/d(param) for every parameter tensor.

    Each of ``instances`` seeded instances draws its own synthetic sample
    and parameters; ``max_coords`` coordinates are checked per tensor per
    instance.
    """
    if instances < 1:
        raise ConfigError(f"instances must be >= 1, got {instances}")
    report = GradCheckReport()
    start = time.monotonic()
    for instance_seed in _instance_seeds(seed, instances):
        _check_instance(cfg, instance_seed, image_size, h, max_coords, richardson, report)
    logger.info(
        "Model gradcheck: %d instances, %d tensors, %d coordinates, %d skipped, max rel %.3e (%s) in %.1fs",
        report.instances, len(report.per_param), report.checked, report.skipped, report.max_rel_error,
        report.worst_param, time.monotonic() - start,
    )
    return report
