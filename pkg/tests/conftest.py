import sys
from pathlib import Path

import hypothesis
import numpy as np
import pytest

SCRIPTS_DIR = Path(__file__).resolve().parent.parent / "scripts"
sys.path.insert(0, str(SCRIPTS_DIR))

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=100, deadline=None)
hypothesis.settings.register_profile("dev", max_examples=25, deadline=None)
hypothesis.settings.load_profile("dev")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow end-to-end tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end solver runs, skipped unless --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def scene():
    from config import SceneConfig
    return SceneConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SMALL_CONFIG = {
    "solver": {"grid_spacing": 2.5, "n_layouts": 2, "max_outer": 1, "max_inner": 2},
    "scenario": {"shape": "circle", "size": 0.8, "speed": 2.0, "seed": 3},
    "experiment": {"shapes": ["circle"], "runs_per_shape": 2, "noise_levels": [0.0], "workers": 1, "seed": 11},
}


@pytest.fixture
def small_config_dict():
    """A config that keeps every CLI and experiment run to a few seconds."""
    import copy
    return copy.deepcopy(SMALL_CONFIG)
