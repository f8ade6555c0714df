import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from renewalopt import TABLE1, Portfolio, generate_synthetic

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

#: Lines appended by the acceptance suite, printed in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def homogeneous_mc():
    """10'000 Table-1 policies with calibrated synthetic premiums."""
    return generate_synthetic(10_000, 7, model="mc")


@pytest.fixture(scope="session")
def synthetic_ma():
    return generate_synthetic(2_000, 3, model="ma")


@pytest.fixture
def single_mc():
    return Portfolio.mc([100.0], tables=(TABLE1,))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
