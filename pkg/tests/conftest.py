import numpy as np
import pytest

from rctkit import Sample


@pytest.fixture
def four_rows():
    return Sample([3.0, 1.0, 2.0, 5.0], [1, 0, 1, 0])


@pytest.fixture
def eight_rows():
    """Fixed 8-unit dataset with two covariates, used against direct normal-equation solves."""
    y = np.array([2.1, 0.4, 3.3, 1.9, 4.0, 2.2, 0.7, 3.6])
    d = np.array([1, 0, 1, 0, 1, 0, 0, 1])
    x = np.array([[0.5, 1.0], [-0.3, 2.0], [1.2, 0.0], [0.1, 1.5],
                  [1.9, -0.5], [0.4, 0.3], [-1.0, 1.1], [0.8, 0.9]])
    return Sample(y, d, x)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
