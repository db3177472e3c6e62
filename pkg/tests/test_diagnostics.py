import pytest

from cascadeseg.errors import ConfigError
from cascadeseg.network.params import CascadeConfig, init_params, is_residual_weight
from cascadeseg.training.diagnostics import OP_NAMES, _check_params, check_model_gradients, run_op_suite


def test_every_op_passes_the_gradient_suite():
    errors = run_op_suite(seed=0, instances=20)
    assert set(errors) == set(OP_NAMES)
    for name, error in errors.items():
        assert error < 1e-4, name


def test_full_model_gradients_over_twenty_instances(tiny_cascade):
    report = check_model_gradients(tiny_cascade, seed=0, image_size=32, max_coords=1, instances=20)
    assert report.instances == 20
    assert len(report.per_param) == 2 * (5 + 5 + tiny_cascade.q * 9 + 1)
    assert report.checked + report.skipped == 20 * len(report.per_param)
    assert report.max_rel_error < 1e-4, report.worst_param
    assert report.passed()


def test_single_pass_network_gradients():
    cfg = CascadeConfig(q=1, unified_channels=3, encoder_channels=(2, 3, 3, 3, 3))
    report = check_model_gradients(cfg, seed=1, image_size=32, max_coords=3, instances=3)
    assert report.instances == 3
    assert report.passed()


def test_check_params_exercise_residual_convs(tiny_cascade):
    params = _check_params(tiny_cascade, seed=4)
    init = init_params(tiny_cascade, seed=4, requires_grad=False)
    for pid, t in params.items():
        if is_residual_weight(pid) or pid.endswith(".bias"):
            assert (t.data != 0.0).any(), pid
        else:
            assert (t.data == init[pid].data).all(), pid


def test_instances_must_be_positive(tiny_cascade):
    with pytest.raises(ConfigError):
        check_model_gradients(tiny_cascade, instances=0)


@pytest.mark.slow
def test_default_network_gradients():
    report = check_model_gradients(CascadeConfig(), seed=0)
    assert report.instances == 20
    assert report.passed(), (report.worst_param, report.max_rel_error)
