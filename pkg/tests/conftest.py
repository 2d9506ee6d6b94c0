import numpy as np
import pytest

from delaycoord.config import ExperimentConfig
from delaycoord.dynamics import make_cat_map, make_rotation
from delaycoord.runner import make_delay_map


@pytest.fixture(scope="session")
def cat():
    return make_cat_map()


@pytest.fixture(scope="session")
def rotation():
    return make_rotation()


@pytest.fixture(scope="session")
def cat_dm():
    """Cat map, k=3, cos1 base perturbed by the seed-0 draw from the unit ball."""
    return make_delay_map(ExperimentConfig(system="cat", k=3, observable="cos1", radius=1.0, seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import REPORT

    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
