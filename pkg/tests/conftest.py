import numpy as np
import pytest
from hypothesis import settings

from drivenbath.bath import DebyeSpec, build_debye_bath
from drivenbath.specfun import AMU, E_CHARGE

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def debye_spec():
    return DebyeSpec(omega_D=1e13, nu=1e13, qbar=E_CHARGE, mbar=63.546 * AMU)


@pytest.fixture(scope="session")
def debye64(debye_spec):
    return build_debye_bath(debye_spec, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
