"""Central finite-difference checks against reverse-mode gradients."""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from cascadeseg.autodiff.tensor import Graph, Tensor
from cascadeseg.errors import GradientCheckError, GraphError

logger = logging.getLogger(__name__)

ScalarFn = Callable[[Tensor], Tensor]

DEFAULT_STEP = 1e-3
DENOMINATOR_FLOOR = 1e-8


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped: int
    worst_index: int | None = None


def _evaluate(f: ScalarFn, data: np.ndarray) -> tuple[float, str]:
    out = f(Tensor(data, requires_grad=True))
    if out.shape != (1, 1, 1, 1):
        raise GraphError(f"gradcheck function must return a (1, 1, 1, 1) tensor, got {out.shape}")
    return out.item(), Graph(out).signature()


def _central_difference(
    f: ScalarFn, base: np.ndarray, index: int, step: float
) -> tuple[float, set[str]]:
    plus = base.copy()
    plus.flat[index] += step
    minus = base.copy()
    minus.flat[index] -= step
    f_plus, sig_plus = _evaluate(f, plus)
    f_minus, sig_minus = _evaluate(f, minus)
    return (f_plus - f_minus) / (2.0 * step), {sig_plus, sig_minus}


def _numeric_derivative(
    f: ScalarFn, base: np.ndarray, index: int, step: float, richardson: bool
) -> tuple[float, set[str]]:
    coarse, signatures = _central_difference(f, base, index, step)
    if not richardson:
        return coarse, signatures
    fine, fine_signatures = _central_difference(f, base, index, step / 2.0)
    return (4.0 * fine - coarse) / 3.0, signatures | fine_signatures


def _analytic_gradient(f: ScalarFn, base: np.ndarray) -> tuple[np.ndarray, str]:
    leaf = Tensor(base, requires_grad=True)
    out = f(leaf)
    if out.shape != (1, 1, 1, 1):
        raise GraphError(f"gradcheck function must return a (1, 1, 1, 1) tensor, got {out.shape}")
    graph = Graph(out)
    signature = graph.signature()
    if out.requires_grad:
        graph.backward()
    grad = leaf.grad if leaf.grad is not None else np.zeros(base.shape, dtype=np.float64)
    return grad, signature


def numeric_gradient(f: ScalarFn, x: Tensor, h: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of ``f`` at ``x``, same shape as ``x``."""
    if h <= 0:
        raise GradientCheckError(f"finite-difference step must be positive, got {h}")
    base = np.array(x.data, dtype=np.float64)
    grad = np.empty(base.shape, dtype=np.float64)
    for index in range(base.size):
        grad.flat[index], _ = _central_difference(f, base, index, h)
    return grad


def gradcheck_details(
    f: ScalarFn,
    x: Tensor,
    h: float = DEFAULT_STEP,
    *,
    richardson: bool = False,
    max_coords: int | None = None,
    seed: int = 0,
) -> GradCheckResult:
    """Compare autodiff against central differences coordinate by coordinate.

    Coordinates whose perturbed evaluations take a different branch of a
    non-smooth op than the unperturbed one are skipped. ``max_coords``
    checks a seeded subset instead of every coordinate.
    """
    if h <= 0:
        raise GradientCheckError(f"finite-difference step must be positive, got {h}")
    base = np.array(x.data, dtype=np.float64)
    analytic, base_signature = _analytic_gradient(f, base)

    indices = np.arange(base.size)
    if max_coords is not None and max_coords < base.size:
        rng = np.random.default_rng(seed)
        indices = np.sort(rng.choice(base.size, size=max_coords, replace=False))

    worst, worst_index, checked, skipped = 0.0, None, 0, 0
    for index in indices:
        numeric, signatures = _numeric_derivative(f, base, int(index), h, richardson)
        if signatures != {base_signature}:
            skipped += 1
            logger.debug("coordinate %d straddles a non-smooth point, skipped", index)
            continue
        a = float(analytic.flat[index])
        denom = max(abs(a), abs(numeric), DENOMINATOR_FLOOR)
        rel = abs(a - numeric) / denom
        checked += 1
        if rel > worst:
            worst, worst_index = rel, int(index)

    return GradCheckResult(max_rel_error=worst, checked=checked, skipped=skipped, worst_index=worst_index)


def finite_diff_gradcheck(
    f: ScalarFn,
    x: Tensor,
    h: float = DEFAULT_STEP,
    *,
    richardson: bool = False,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Worst relative error |a - n| / max(|a|, |n|, 1e-8) over checked coordinates."""
    return gradcheck_details(
        f, x, h, richardson=richardson, max_coords=max_coords, seed=seed
    ).max_rel_error
