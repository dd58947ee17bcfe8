import numpy as np
import pytest

from viscomem.kernel import KernelParams
from viscomem.mac import StaggeredGrid, VelocityField


def random_field(grid, rng):
    return VelocityField(grid, rng.standard_normal(grid.size))


def random_cells(grid, rng):
    return rng.standard_normal((grid.nx, grid.ny))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def kernel():
    return KernelParams(0.5, 1.0, 0.5)


@pytest.fixture(params=[(16, 16, 1.0, 1.0), (12, 20, 2.0, 1.0)], ids=["square", "rectangle"])
def grid(request):
    return StaggeredGrid(*request.param)


_ACCEPTANCE_LINES = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _ACCEPTANCE_LINES.extend(
            line for line in report.capstdout.splitlines() if line.startswith(("PASS criterion", "FAIL criterion"))
        )


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
