import numpy as np
import pytest

from subsetgrad.model import Dataset


@pytest.fixture
def small_data():
    rng = np.random.default_rng(20)
    X = rng.standard_normal((20, 6))
    y = X[:, [0, 3]] @ np.array([1.5, -2.0]) + 0.3 * rng.standard_normal(20)
    return Dataset(X, y)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
