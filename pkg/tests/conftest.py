import sys
from pathlib import Path

import numpy as np
import pytest

import oseen_cpinn  # noqa: F401  (enables double precision)
from oseen_cpinn.problem import make_example1, make_example2

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def ex1():
    return make_example1()


@pytest.fixture(scope="session")
def ex2():
    return make_example2(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
