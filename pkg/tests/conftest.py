import math

import pytest

from landau_factor.geometry import PrecessingCone, transport_frame
from landau_factor.hilbert import PhysicalParams


@pytest.fixture(scope="session")
def params():
    return PhysicalParams(L=1.0, potential=(12.5, 0.0, 0.0), eps=0.01)


@pytest.fixture(scope="session")
def cone_frame():
    """Cone of half-angle 60 degrees at eps = 0.01, one full period."""
    return transport_frame(PrecessingCone(math.pi / 3, 0.01))


@pytest.fixture(scope="session")
def fast_cone_frame():
    """Same cone at eps = 0.1 (short period, cheap to transport)."""
    return transport_frame(PrecessingCone(math.pi / 3, 0.1))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record the one-line pass/fail summary of an acceptance criterion."""

    def _record(number: int, passed: bool, text: str):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
