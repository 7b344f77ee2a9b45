import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from opuclab.coeffs import from_values, gen_power_decay, gen_random_weighted

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def free_seq():
    return from_values(np.zeros(1000, dtype=np.complex128))


@pytest.fixture
def single_half():
    return from_values([0.5])


@pytest.fixture
def rw06():
    return gen_random_weighted(0.6, 0.2, 11, 4096)


@pytest.fixture
def power_seq():
    return gen_power_decay(0.7, 0.8, 3, 2048)


HALF_PI = math.pi / 2


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.lines():
            terminalreporter.write_line(line)
