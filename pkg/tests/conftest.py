import numpy as np
import pytest

from critlab.grid import GridSpec
from critlab.lorentz import LorentzExponents


@pytest.fixture
def grid2():
    return GridSpec(2, 4.0, 0.1, 0.0, 0.25, 0.025)


@pytest.fixture
def crit2():
    return LorentzExponents.critical(2, 4.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
