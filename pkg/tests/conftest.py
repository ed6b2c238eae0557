import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tomomatch.geometry import PointCloud

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_cloud(rng, n=500, scale=3.0):
    return PointCloud(rng.uniform(-scale, scale, (n, 3)))


# One verdict line per acceptance criterion, printed after the run.
ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[n])
