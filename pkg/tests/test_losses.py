import math

import numpy as np
import pytest

from cascadeseg.autodiff.gradcheck import finite_diff_gradcheck
from cascadeseg.autodiff.tensor import Tensor, backward
from cascadeseg.errors import ShapeError
from cascadeseg.training.losses import EPS, bce_loss, iou_loss, total_loss


def _bce_oracle(p, l):
    acc = 0.0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            q = min(max(p[i, j], EPS), 1 - EPS)
            acc += l[i, j] * math.log(q) + (1 - l[i, j]) * math.log(1 - q)
    return -acc / p.size


def _iou_oracle(p, l):
    inter = union = 0.0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            inter += l[i, j] * p[i, j]
            union += l[i, j] + p[i, j] - l[i, j] * p[i, j]
    return 1.0 - inter / union


def _probs(p):
    return Tensor(p.reshape(1, 1, *p.shape))


def test_losses_match_loop_oracles():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        p = rng.uniform(size=(8, 8))
        l = (rng.uniform(size=(8, 8)) > 0.5).astype(np.float64)
        assert bce_loss(_probs(p), l).item() == pytest.approx(_bce_oracle(p, l), abs=1e-10)
        assert iou_loss(_probs(p), l).item() == pytest.approx(_iou_oracle(p, l), abs=1e-10)


def test_bce_known_values():
    l = np.zeros((4, 4))
    l[:2] = 1.0
    assert bce_loss(_probs(l.copy()), l).item() <= -math.log(1 - EPS) + 1e-15
    assert bce_loss(_probs(np.full((4, 4), 0.5)), l).item() == pytest.approx(math.log(2), abs=1e-12)


def test_iou_known_values():
    ones = np.ones((4, 4))
    assert iou_loss(_probs(ones), ones).item() == 0.0
    assert iou_loss(_probs(np.zeros((4, 4))), ones).item() == 1.0
    half = np.zeros((4, 4))
    half[:, :2] = 1.0
    assert iou_loss(_probs(np.full((4, 4), 0.5)), half).item() == pytest.approx(2 / 3, abs=1e-12)
    # empty prediction and empty label
    assert iou_loss(_probs(np.zeros((4, 4))), np.zeros((4, 4))).item() == 0.0


def test_total_loss():
    half = np.zeros((4, 4))
    half[:, :2] = 1.0
    value = total_loss(_probs(np.full((4, 4), 0.5)), half)
    assert value.total == pytest.approx(1.359814, abs=1e-6)
    assert value.total == pytest.approx(value.bce + value.iou, rel=1e-15)
    assert value.n == 16
    assert total_loss(_probs(half.copy()), half).total <= 2e-7


def test_batch_is_mean_of_images(rng):
    p = rng.uniform(0.05, 0.95, size=(3, 1, 6, 6))
    l = (rng.uniform(size=(3, 6, 6)) > 0.5).astype(np.float64)
    batched = total_loss(Tensor(p), l)
    singles = [total_loss(Tensor(p[i:i + 1]), l[i]) for i in range(3)]
    assert batched.bce == pytest.approx(np.mean([s.bce for s in singles]), rel=1e-12)
    assert batched.iou == pytest.approx(np.mean([s.iou for s in singles]), rel=1e-12)


def test_label_shape_mismatch():
    with pytest.raises(ShapeError):
        bce_loss(_probs(np.full((4, 4), 0.5)), np.zeros((4, 5)))


def test_loss_gradients(rng):
    p = Tensor(rng.uniform(0.1, 0.9, size=(2, 1, 5, 5)))
    l = (rng.uniform(size=(2, 5, 5)) > 0.5).astype(np.float64)
    assert finite_diff_gradcheck(lambda t: total_loss(t, l).tensor, p) < 1e-4
    assert finite_diff_gradcheck(lambda t: iou_loss(t, l), p) < 1e-4


def test_clamped_pixels_get_no_gradient():
    p = Tensor(np.array([0.0, 0.5, 1.0, 0.5]).reshape(1, 1, 2, 2), requires_grad=True)
    l = np.array([[1.0, 1.0], [0.0, 0.0]])
    backward(bce_loss(p, l))
    assert p.grad[0, 0, 0, 0] == 0.0 and p.grad[0, 0, 1, 0] == 0.0
    assert p.grad[0, 0, 0, 1] < 0 < p.grad[0, 0, 1, 1]


def test_losses_ignore_joint_pixel_permutation():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        p = rng.uniform(size=(6, 7))
        l = (rng.uniform(size=(6, 7)) > 0.4).astype(np.float64)
        order = rng.permutation(p.size)
        p_perm = p.ravel()[order].reshape(p.shape)
        l_perm = l.ravel()[order].reshape(l.shape)
        assert abs(bce_loss(_probs(p), l).item() - bce_loss(_probs(p_perm), l_perm).item()) <= 1e-12
        assert abs(iou_loss(_probs(p), l).item() - iou_loss(_probs(p_perm), l_perm).item()) <= 1e-12


def test_bce_moves_towards_the_label(rng):
    p = rng.uniform(0.05, 0.9, size=(8, 8))
    l = (rng.uniform(size=(8, 8)) > 0.5).astype(np.float64)
    base = bce_loss(_probs(p), l).item()
    for k in rng.choice(p.size, size=16, replace=False):
        for step in (1e-4, 1e-2, 0.05):
            raised = p.copy()
            raised.flat[k] += step
            value = bce_loss(_probs(raised), l).item()
            if l.flat[k] == 1.0:
                assert value < base
            else:
                assert value > base


def test_iou_loss_stays_in_unit_interval():
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n, h, w = int(rng.integers(1, 4)), int(rng.integers(1, 9)), int(rng.integers(1, 9))
        p = rng.uniform(size=(n, 1, h, w))
        l = (rng.uniform(size=(n, h, w)) < rng.uniform()).astype(np.float64)
        value = iou_loss(Tensor(p), l).item()
        assert 0.0 <= value <= 1.0
