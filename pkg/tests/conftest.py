import pytest

from mlab import CuspFunction, CuspidalDomain

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def d1():
    return CuspidalDomain(0.5, 3, CuspFunction.power(2.0, 0.9))


@pytest.fixture(scope="session")
def unit_power():
    """a=0.5, k=3, f=x^2: area 5/24."""
    return CuspidalDomain(0.5, 3, CuspFunction.power(2.0, 1.0))


GALLERY = {
    "power": CuspFunction.power(2.0, 0.9),
    "loglog": CuspFunction.loglog(2.0, 0.1),
    "neglog": CuspFunction.neglog(2.0, 0.2),
    "logpower": CuspFunction.logpower(2.0, 0.3, 0.5),
}


def gallery_domains(k=3, a=0.5):
    return {name: CuspidalDomain(a, k, f) for name, f in GALLERY.items()}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
