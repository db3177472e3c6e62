import numpy as np
import pytest

from cascadeseg.config import ENV_PREFIX
from cascadeseg.network.params import CascadeConfig, init_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cascade():
    """Narrow network so full forward/backward passes stay fast."""
    return CascadeConfig(q=2, unified_channels=4, encoder_channels=(3, 4, 4, 4, 4))


@pytest.fixture
def tiny_params(tiny_cascade):
    return init_params(tiny_cascade, seed=7)


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    """No CASCADESEG_* variables and no stray .env in the working directory."""
    import os

    for name in list(os.environ):
        if name.startswith(ENV_PREFIX):
            monkeypatch.delenv(name)
    monkeypatch.chdir(tmp_path)
    return tmp_path
