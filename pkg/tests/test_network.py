import numpy as np
import pytest

from cascadeseg.autodiff.ops import add, conv2d, global_max_pool, mul, sigmoid
from cascadeseg.autodiff.tensor import Tensor
from cascadeseg.errors import ConfigError, ShapeError
from cascadeseg.network.encoder import FeaturePyramid, encode, unify_channels
from cascadeseg.network.gigm import GIGMPair, cascade, gigm_fuse, gigm_gate, residual
from cascadeseg.network.model import SaliencyMap, forward, images_to_tensor, predict_head
from cascadeseg.network.params import (
    HEAD_BIAS,
    HEAD_WEIGHT,
    CascadeConfig,
    gigm_id,
    init_params,
    top_id,
    unify_id,
)


def _zero_pair(c):
    w = Tensor(np.zeros((c, c, 1, 1)))
    b = Tensor(np.zeros((1, c, 1, 1)))
    return GIGMPair(w, b, w, b)


def _random_pyramid(rng, n=1, c=4, top=1):
    return FeaturePyramid(tuple(Tensor(rng.normal(size=(n, c, top * 2 ** k, top * 2 ** k))) for k in range(4, -1, -1)))


def _zero_cascade_params(params):
    return params.replace({pid: np.zeros(t.shape) for pid, t in params.items() if pid.startswith("cascade.")})


# ── Encoder ─────────────────────────────────────────────────────────


def test_encoder_extents():
    cfg = CascadeConfig()
    params = init_params(cfg, seed=0, requires_grad=False)
    raw = encode(Tensor(np.zeros((1, 3, 64, 64))), params)
    assert [r.shape[2] for r in raw] == [32, 16, 8, 4, 2]
    assert [r.shape[1] for r in raw] == [8, 16, 32, 64, 128]
    # zero image with zero biases
    assert all(np.all(r.data == 0.0) for r in raw)
    unified = unify_channels(raw, params)
    assert unified.channels == (32,) * 5


def test_encoder_rejects_bad_input(tiny_params):
    with pytest.raises(ShapeError, match="height 48"):
        encode(Tensor(np.zeros((1, 3, 48, 32))), tiny_params)
    with pytest.raises(ShapeError):
        encode(Tensor(np.zeros((1, 1, 32, 32))), tiny_params)


def test_encoder_is_deterministic(rng, tiny_cascade):
    image = Tensor(rng.uniform(size=(1, 3, 32, 32)))
    a = encode(image, init_params(tiny_cascade, seed=2))
    b = encode(image, init_params(tiny_cascade, seed=2))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.data, y.data)


def test_unify_identity_and_oracle(rng):
    cfg = CascadeConfig(unified_channels=4, encoder_channels=(4, 4, 4, 4, 4))
    params = init_params(cfg, seed=0, requires_grad=False)
    raw = [Tensor(rng.normal(size=(1, 4, 2 ** k, 2 ** k))) for k in range(5, 0, -1)]

    identity = params.replace({unify_id(l, "weight"): np.eye(4).reshape(4, 4, 1, 1) for l in range(1, 6)})
    for r, u in zip(raw, unify_channels(raw, identity)):
        np.testing.assert_array_equal(u.data, r.data)

    random = params.replace({unify_id(l, "weight"): rng.normal(size=(4, 4, 1, 1)) for l in range(1, 6)})
    unified = unify_channels(raw, random)
    for level, (r, u) in enumerate(zip(raw, unified), 1):
        w = random[unify_id(level, "weight")].data[:, :, 0, 0]
        for i in range(r.shape[2]):
            for j in range(r.shape[3]):
                np.testing.assert_allclose(u.data[0, :, i, j], w @ r.data[0, :, i, j], rtol=0, atol=1e-12)


def test_unify_channel_mismatch(tiny_params, rng):
    raw = [Tensor(rng.normal(size=(1, 9, 2 ** k, 2 ** k))) for k in range(5, 0, -1)]
    with pytest.raises(ShapeError):
        unify_channels(raw, tiny_params)


def test_pyramid_requires_halving(rng):
    with pytest.raises(ShapeError):
        FeaturePyramid(tuple(Tensor(np.zeros((1, 2, 4, 4))) for _ in range(5)))


# ── Guidance module ─────────────────────────────────────────────────


def test_gate_values(rng):
    gate = gigm_gate(Tensor(np.zeros((2, 3, 4, 4))))
    assert gate.shape == (2, 3, 1, 1)
    assert np.all(gate.data == 0.5)
    x = np.zeros((1, 2, 3, 3))
    x[0, 1, 2, 2] = 20.0
    assert gigm_gate(Tensor(x)).data[0, 1, 0, 0] == pytest.approx(0.999999998, abs=1e-9)
    g = gigm_gate(Tensor(rng.normal(scale=5.0, size=(2, 4, 3, 5)))).data
    assert np.all((g > 0) & (g < 1))


def test_zero_weights_collapse_residuals(rng):
    f_i = Tensor(rng.normal(size=(2, 4, 4, 4)))
    gate = gigm_gate(Tensor(rng.normal(size=(2, 4, 2, 2))))
    out = gigm_fuse(f_i, gate, _zero_pair(4)).data
    np.testing.assert_allclose(out, (1.0 + gate.data) * f_i.data, rtol=1e-15, atol=1e-15)
    np.testing.assert_array_equal(out, gate.data * f_i.data + f_i.data)


def test_zero_next_level_gives_one_and_a_half(rng):
    f_i = Tensor(rng.normal(size=(1, 4, 4, 4)))
    gate = gigm_gate(Tensor(np.zeros((1, 4, 2, 2))))
    out = gigm_fuse(f_i, gate, _zero_pair(4)).data
    np.testing.assert_array_equal(out, 1.5 * f_i.data)


def test_fuse_matches_scalar_transcription(rng):
    c = 2
    f = rng.normal(size=(1, c, 2, 2))
    g = rng.uniform(size=(1, c, 1, 1))
    wi, wo = rng.normal(size=(c, c)), rng.normal(size=(c, c))
    bi, bo = rng.normal(size=c), rng.normal(size=c)
    pair = GIGMPair(
        Tensor(wi.reshape(c, c, 1, 1)), Tensor(bi.reshape(1, c, 1, 1)),
        Tensor(wo.reshape(c, c, 1, 1)), Tensor(bo.reshape(1, c, 1, 1)),
    )
    out = gigm_fuse(Tensor(f), Tensor(g), pair).data
    for y in range(2):
        for x in range(2):
            v = f[0, :, y, x]
            inner = [sum(wi[o, k] * v[k] for k in range(c)) + bi[o] + v[o] for o in range(c)]
            mid = [inner[o] * g[0, o, 0, 0] + v[o] for o in range(c)]
            outer = [sum(wo[o, k] * mid[k] for k in range(c)) + bo[o] + mid[o] for o in range(c)]
            np.testing.assert_allclose(out[0, :, y, x], outer, rtol=0, atol=1e-12)


def test_fuse_shape_checks(rng):
    f_i = Tensor(rng.normal(size=(1, 4, 2, 2)))
    with pytest.raises(ShapeError):
        gigm_fuse(f_i, Tensor(np.zeros((1, 3, 1, 1))), _zero_pair(4))
    with pytest.raises(ShapeError):
        gigm_fuse(f_i, Tensor(np.zeros((1, 4, 1, 1))), _zero_pair(3))


# ── Cascade ─────────────────────────────────────────────────────────


def test_single_pass_matches_hand_chain(rng):
    cfg = CascadeConfig(q=1, unified_channels=4, encoder_channels=(4, 4, 4, 4, 4))
    params = init_params(cfg, seed=5, requires_grad=False)
    params = params.replace(
        {
            pid: rng.normal(scale=0.1, size=t.shape)
            for pid, t in params.items()
            if pid.startswith("cascade.") or pid.endswith("bias")
        }
    )
    pyramid = _random_pyramid(rng)
    decoded = cascade(pyramid, cfg, params)

    d5 = add(conv2d(pyramid[4], params[top_id(1, "weight")], params[top_id(1, "bias")]), pyramid[4])
    expected = [None] * 4 + [d5]
    for i in (3, 2, 1, 0):
        gate = sigmoid(global_max_pool(expected[i + 1]))
        f = pyramid[i]
        ids = {(w, k): params[gigm_id(1, i + 1, w, k)] for w in ("inner", "outer") for k in ("weight", "bias")}
        inner = add(conv2d(f, ids["inner", "weight"], ids["inner", "bias"]), f)
        mid = add(mul(inner, gate), f)
        expected[i] = add(conv2d(mid, ids["outer", "weight"], ids["outer", "bias"]), mid)

    for got, want in zip(decoded, expected):
        np.testing.assert_allclose(got.data, want.data, rtol=0, atol=1e-12)


def test_zero_everything_stays_zero(tiny_cascade, tiny_params):
    pyramid = FeaturePyramid(tuple(Tensor(np.zeros((1, 4, 2 ** k, 2 ** k))) for k in range(5, 0, -1)))
    for d in cascade(pyramid, tiny_cascade, _zero_cascade_params(tiny_params)):
        assert np.all(d.data == 0.0)


def test_top_level_ignores_lower_levels(rng, tiny_cascade, tiny_params):
    pyramid = _random_pyramid(rng)
    perturbed = FeaturePyramid((Tensor(pyramid[0].data + 1.0),) + pyramid.levels[1:])
    a = cascade(pyramid, tiny_cascade, tiny_params)
    b = cascade(perturbed, tiny_cascade, tiny_params)
    np.testing.assert_array_equal(a[4].data, b[4].data)
    assert not np.array_equal(a[0].data, b[0].data)


def test_initialized_cascade_only_applies_gates(rng, tiny_cascade, tiny_params):
    pyramid = _random_pyramid(rng)
    decoded = cascade(pyramid, tiny_cascade, tiny_params)
    np.testing.assert_array_equal(decoded[4].data, pyramid[4].data)
    expected = list(pyramid.levels)
    for _ in range(tiny_cascade.q):
        for i in (3, 2, 1, 0):
            gate = gigm_gate(expected[i + 1]).data
            expected[i] = Tensor(gate * expected[i].data + expected[i].data)
    for got, want in zip(decoded, expected):
        np.testing.assert_allclose(got.data, want.data, rtol=1e-14, atol=0)


def test_cascade_depth_must_fit_params(rng, tiny_params):
    deeper = CascadeConfig(q=3, unified_channels=4, encoder_channels=(3, 4, 4, 4, 4))
    with pytest.raises(ConfigError):
        cascade(_random_pyramid(rng), deeper, tiny_params)


def test_residual_is_conv_plus_input(rng):
    x = Tensor(rng.normal(size=(1, 2, 3, 3)))
    out = residual(x, Tensor(np.zeros((2, 2, 1, 1))), Tensor(np.zeros((1, 2, 1, 1))))
    np.testing.assert_array_equal(out.data, x.data)


# ── Head and forward ────────────────────────────────────────────────


def test_head_zero_is_half(rng, tiny_params):
    zero = tiny_params.replace({HEAD_WEIGHT: np.zeros(tiny_params[HEAD_WEIGHT].shape)})
    out = predict_head(Tensor(rng.normal(size=(1, 4, 8, 8))), zero, 16, 16)
    assert out.shape == (16, 16)
    assert np.all(out.array() == 0.5)


def test_head_bias_is_monotone(rng, tiny_params):
    d1 = Tensor(rng.normal(size=(1, 4, 8, 8)))
    base = predict_head(d1, tiny_params, 16, 16).array()
    shifted = tiny_params.replace({HEAD_BIAS: tiny_params[HEAD_BIAS].data + 10.0})
    assert np.all(predict_head(d1, shifted, 16, 16).array() > base)


def test_head_requires_stride_two(rng, tiny_params):
    with pytest.raises(ShapeError):
        predict_head(Tensor(rng.normal(size=(1, 4, 8, 8))), tiny_params, 32, 32)


def test_forward_shape_range_and_determinism(rng, tiny_cascade, tiny_params):
    image = images_to_tensor([rng.uniform(size=(3, 32, 32)) for _ in range(2)])
    a = forward(image, tiny_cascade, tiny_params)
    b = forward(image, tiny_cascade, tiny_params)
    assert isinstance(a, SaliencyMap)
    assert a.batch == 2 and a.shape == (32, 32)
    assert np.all((a.probs.data > 0) & (a.probs.data < 1))
    np.testing.assert_array_equal(a.probs.data, b.probs.data)


def test_forward_checks_config(rng, tiny_params):
    with pytest.raises(ConfigError):
        forward(images_to_tensor([rng.uniform(size=(3, 32, 32))]), CascadeConfig(), tiny_params)
