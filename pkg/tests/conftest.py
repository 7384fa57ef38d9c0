import numpy as np
import pytest

from codesign.data import DatasetSplit, make_split, synthesize_year
from codesign.env import BuildingEnv, EnvConstants


@pytest.fixture(scope="session")
def series():
    return synthesize_year(0)


@pytest.fixture(scope="session")
def split(series):
    return make_split(series, 0)


@pytest.fixture(scope="session")
def env(series, split):
    return BuildingEnv(series, split, EnvConstants())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def late_split(start=300):
    """Split whose only validation week begins on ``start``."""
    val = tuple(range(start, start + 7))
    return DatasetSplit(tuple(d for d in range(365) if d not in val), val)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
