import numpy as np
import pytest

from resdrift import rods, splitting
from resdrift.liegroup import exp_so3


@pytest.fixture(scope="session")
def cal():
    return splitting.calibrate()


@pytest.fixture(scope="session")
def resonant():
    return rods.resonant_parameters()


def random_rotation(rng):
    return exp_so3(rng.normal(size=3))


def random_rod_point(rng, scale=0.5):
    return rods.RodPhasePoint(random_rotation(rng), random_rotation(rng),
                              scale * rng.normal(size=3), scale * rng.normal(size=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
