import numpy as np
import pytest

from xrpdprep.core import Pattern


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_pattern(y, theta0=10.0, step=0.01):
    return Pattern.from_grid(theta0, step, np.asarray(y, dtype=float))


def gauss(theta, center, height, fwhm):
    sigma = fwhm / (2 * np.sqrt(2 * np.log(2)))
    return height * np.exp(-0.5 * ((theta - center) / sigma) ** 2)


# one line per acceptance criterion, collected by test_acceptance.report
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
