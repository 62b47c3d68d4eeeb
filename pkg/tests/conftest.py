import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tsefem.assembly import QUAD5, QuadratureData, assemble_forms
from tsefem.mesh import build_unit_square_mesh
from tsefem.spaces import build_taylor_hood

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


class Discretization:
    def __init__(self, n):
        self.mesh = build_unit_square_mesh(n)
        self.space = build_taylor_hood(self.mesh)
        self.forms = assemble_forms(self.space)
        self.qd = QuadratureData(self.space, QUAD5)


@pytest.fixture(scope="session")
def square4():
    return Discretization(4)


@pytest.fixture(scope="session")
def square8():
    return Discretization(8)


@pytest.fixture(scope="session")
def square16():
    return Discretization(16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA: list[str] = []


@pytest.fixture
def verdict():
    """Record and print a one-line PASS/FAIL verdict for an acceptance criterion."""
    def record(label: str, ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
