import logging

import numpy as np
import pytest

from pmcflow import spacetimes as st
from pmcflow.grids import SpatialGrid


def pytest_configure(config):
    logging.getLogger("pmcflow").setLevel(logging.ERROR)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mink2():
    return st.make_minkowski_chart(2)


@pytest.fixture
def radial_grid():
    return SpatialGrid.radial(2, 129, 4.0)



ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """record(number, passed, detail) for the acceptance summary printed at the end of the run."""

    def record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
