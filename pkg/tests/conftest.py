import numpy as np
import pytest

from lpqe.actions.dataset import synth_prepared
from lpqe.quant.rng import RngStream
from lpqe.session.config import Config
from lpqe.utils.common import set_debug


@pytest.fixture(autouse=True)
def quiet_debug():
    set_debug(False)
    yield
    set_debug(False)


@pytest.fixture
def rng():
    return RngStream(2022)


@pytest.fixture
def np_rng():
    return np.random.default_rng(7)


@pytest.fixture(scope='session')
def small_data():
    """Generated CTR data small enough for a few fast epochs"""
    return synth_prepared(n_fields=4, vocab_size=80, n_samples=1200, signal_strength=2.0, seed=11)


@pytest.fixture
def small_config():
    """Defaulted configuration sized for unit-test training runs"""
    config = Config(data={
        'model': {'dim': 4},
        'regime': {'init_scale': 0.05},
        'optim': {'lr': 0.01, 'delta_lr': 1e-4},
        'train': {'epochs': 3, 'batch_size': 128, 'seed': 5, 'patience': 2},
    })
    config.init()
    config.validate()
    return config
