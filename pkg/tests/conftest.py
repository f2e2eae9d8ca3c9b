import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from willmore_lab.ambient import MetricModel

settings.register_profile("lab", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture(scope="session")
def flat():
    return MetricModel.flat()


@pytest.fixture(scope="session")
def spaceform1():
    return MetricModel.spaceform(1.0)


@pytest.fixture(scope="session")
def spaceform05():
    return MetricModel.spaceform(0.5)


@pytest.fixture(scope="session")
def quadratic():
    return MetricModel.quadratic(np.diag([1.0, 2.0, 3.0]), (0.7, 0.0, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


def pytest_configure(config):
    config.acceptance_results = {}


@pytest.fixture
def acceptance(request):
    """Record ``(passed, detail)`` for an acceptance criterion and print it."""
    results = request.config.acceptance_results

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        results[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "acceptance_results", {})
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
