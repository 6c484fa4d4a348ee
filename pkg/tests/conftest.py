import pytest
from hypothesis import settings

from gsconvex.sampling import BoxDomain, SamplePlan

settings.register_profile("fixed", derandomize=True)
settings.load_profile("fixed")

_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, ok, detail):
        line = f"[acceptance] criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def small_plan():
    return SamplePlan(n_pairs=64)


@pytest.fixture
def unit_box():
    return BoxDomain([-1.0], [1.0])
