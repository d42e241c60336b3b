import json
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mgir.config import RunConfig
from mgir.optics.scene import synthetic_scene

SEED = 20240607
GOLDEN_DIR = os.path.join(os.path.dirname(__file__), 'golden')

settings.register_profile('fast', max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile('ci', max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.getenv('HYPOTHESIS_PROFILE', 'fast'))


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long-running training runs (deselect with -m "not slow")')


@pytest.fixture(scope='function')
def rng():
    """Fresh generator with a fixed seed for every test."""
    return np.random.default_rng(SEED)


@pytest.fixture(scope='session')
def toy_cfg():
    return RunConfig.preset('toy')


@pytest.fixture(scope='function')
def tiny_cfg(toy_cfg):
    """Toy architecture on a handful of queries, for fast forward/backward passes."""
    return toy_cfg.with_train(queries_per_step=64, steps=3)


@pytest.fixture(scope='session')
def small_scene():
    return synthetic_scene(8, 16, 16, blobs=3, seed=1)


class Golden(object):
    """
    Frozen reference values under tests/golden, compared exactly. A missing file fails the test;
    MGIR_UPDATE_GOLDEN=1 rewrites the file from the current value instead.
    """

    def __init__(self, name):
        self.path = os.path.join(GOLDEN_DIR, name + '.json')

    def check(self, value):
        if os.getenv('MGIR_UPDATE_GOLDEN') == '1':
            os.makedirs(GOLDEN_DIR, exist_ok=True)
            with open(self.path, 'w', encoding='utf-8') as f:
                json.dump(value, f, indent=2, sort_keys=True)
            return
        if not os.path.exists(self.path):
            pytest.fail(f"golden file {self.path} is missing; set MGIR_UPDATE_GOLDEN=1 to create it")
        with open(self.path, 'r', encoding='utf-8') as f:
            frozen = json.load(f)
        assert json.loads(json.dumps(value)) == frozen


@pytest.fixture
def golden(request):
    def make(name=None):
        return Golden(name or request.node.name)
    return make
