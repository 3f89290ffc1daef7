import numpy as np
import pytest

from heatlab.fem import FeSpace
from heatlab.mesh import build_mesh
from heatlab.spectral import SemigroupOperator, decompose_space


def make_space(domain, level, degree=1):
    return FeSpace(build_mesh(domain, level), degree)


@pytest.fixture(scope="session")
def square3():
    space = make_space("square", 3)
    return space, SemigroupOperator(decompose_space(space), space)


@pytest.fixture(scope="session")
def lshape3():
    space = make_space("lshape", 3)
    return space, SemigroupOperator(decompose_space(space), space)


@pytest.fixture(scope="session")
def square4():
    space = make_space("square", 4)
    return space, SemigroupOperator(decompose_space(space), space)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
