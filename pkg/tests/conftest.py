import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from circmix.estimator import MixedSample

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_sample(rng, n=30, k=1, levels=(3,), spread=1.0):
    X = rng.uniform(0, 1, (n, k))
    Z = np.column_stack([rng.integers(0, c, n) for c in levels]) if levels else np.zeros((n, 0), int)
    theta = rng.uniform(-np.pi, np.pi, n) * spread
    return MixedSample(X, Z, theta, tuple(levels))
