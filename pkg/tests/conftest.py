import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qnkrylov.core import QuadraticModel
from qnkrylov.problems import synthetic_spd

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def spd_instance(n, kappa, seed=0, spectrum="linear"):
    A = synthetic_spd(n, kappa, seed, spectrum)
    b = np.random.default_rng(seed + 1).standard_normal(n)
    return A, b, QuadraticModel(A, b)


@pytest.fixture
def spd20():
    return spd_instance(20, 100.0)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
