import pytest

from hill_gse.kernel import make_kernel_from_coeffs, make_ou_kernel

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def ou():
    return make_ou_kernel(1.0)


@pytest.fixture(scope="session")
def const_kernel():
    return make_kernel_from_coeffs([1.0])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
