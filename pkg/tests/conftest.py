import sys

import pytest

from lbenergy import kernels
from lbenergy.lattice import build_velocity_set


def pytest_addoption(parser):
    parser.addoption("--kernel-backend", default=None, help="force 'compiled' or 'python' kernels")


@pytest.fixture(scope="session")
def d2q37():
    return build_velocity_set("D2Q37")


@pytest.fixture(scope="session")
def d2q9():
    return build_velocity_set("D2Q9")


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
