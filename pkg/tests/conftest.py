import numpy as np
import pytest

from transport_approx.quadrature import clenshaw_curtis


@pytest.fixture(scope="session")
def cc_unit():
    """Clenshaw-Curtis rule on [0, 1] at the default study size."""
    return clenshaw_curtis(10_000, (0.0, 1.0))


@pytest.fixture(scope="session")
def cc_small():
    return clenshaw_curtis(2001, (0.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion and return the flag."""

    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
