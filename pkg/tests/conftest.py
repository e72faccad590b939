import numpy as np
import pytest

from darcydd.mesh import (
    generate_cross_fracture_cube,
    generate_unit_cube,
    generate_unit_square,
)

import support


@pytest.fixture(scope="session")
def square4():
    return generate_unit_square(4)


@pytest.fixture(scope="session")
def square6():
    return generate_unit_square(6)


@pytest.fixture(scope="session")
def cube2():
    return generate_unit_cube(2)


@pytest.fixture(scope="session")
def frac2():
    return generate_cross_fracture_cube(2)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if support.ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in support.ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
