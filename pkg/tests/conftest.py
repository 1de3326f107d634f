import math

import pytest
from hypothesis import settings

from fracbeam.model import SystemParams

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

PI = math.pi


@pytest.fixture
def case1():
    return SystemParams(1.0, 1.0, 1.0, 1.0, gamma=1.0, eta=1.0, alpha=0.5)


@pytest.fixture
def resonant():
    return SystemParams(4 * PI**2, 1.0, 4 * PI**2, 1.0, gamma=1.0, eta=1.0, alpha=0.5)


@pytest.fixture
def different():
    return SystemParams(1.0, 1.0, 1.0, 4.0, gamma=1.0, eta=1.0, alpha=0.5)


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record a one-line verdict for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str):
        ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
