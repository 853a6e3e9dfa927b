import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qroute.instance import TspInstance, generate_random_tsp

settings.register_profile(
    "qroute",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("qroute")

# acceptance results, filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


class Criterion:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.detail = "did not complete"
        self.passed = False

    def result(self, passed: bool, detail: str):
        self.passed = bool(passed)
        self.detail = detail
        ACCEPTANCE[self.number] = self
        return self.passed


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    c = Criterion(*marker.args)
    ACCEPTANCE[c.number] = c
    yield c


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(ACCEPTANCE):
        c = ACCEPTANCE[k]
        status = "PASS" if c.passed else "FAIL"
        terminalreporter.write_line(f"AC{k:02d} {status}  {c.title}: {c.detail}")


@pytest.fixture
def inst4() -> TspInstance:
    # tours: 0-1-2-3 = 35+44+45+46 = 170, 0-1-3-2 = 35+19+45+38 = 137,
    # 0-2-1-3 = 38+44+19+46 = 147
    return TspInstance("hand4", np.array([
        [0, 35, 38, 46],
        [35, 0, 44, 19],
        [38, 44, 0, 45],
        [46, 19, 45, 0],
    ], dtype=float))


@pytest.fixture
def inst5() -> TspInstance:
    return generate_random_tsp(5, 0)


def random_bits(rng, dim):
    return rng.integers(0, 2, dim)
