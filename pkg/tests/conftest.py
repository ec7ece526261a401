import numpy as np
import pytest

from bergman_geodesics.geometry import Bump, Dilation, FubiniStudy

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def fs():
    return FubiniStudy()


@pytest.fixture(scope="session")
def dil():
    return Dilation(1.0)


@pytest.fixture(scope="session")
def bump():
    return Bump(0.3, 1.5)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split()[0])):
            terminalreporter.write_line(line)
