import numpy as np
import pytest

from ctmc_waiting import fixtures


@pytest.fixture
def pair():
    return fixtures.two_state_pair()


@pytest.fixture
def cycle():
    return fixtures.cycle(0.9)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
