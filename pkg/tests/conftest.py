import numpy as np
import pytest

from copulafactor.data import MarginSpec, MixedDataMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_mixed(rng):
    """n=40 one-factor mixed data: two continuous, one ordinal, one binary column."""
    n = 40
    eta = rng.standard_normal(n)
    Z = 0.8 * eta[:, None] + 0.6 * rng.standard_normal((n, 4))
    Y = Z.copy()
    Y[:, 1] = np.exp(Z[:, 1])
    Y[:, 2] = 1 + np.searchsorted([-0.5, 0.0, 0.7], Z[:, 2])
    Y[:, 3] = 1 + (Z[:, 3] > 0.2)
    margins = [
        MarginSpec.continuous("a"),
        MarginSpec.continuous("b"),
        MarginSpec.ordinal(4, "c"),
        MarginSpec.binary("d"),
    ]
    return MixedDataMatrix(Y, margins)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Print and record one PASS/FAIL line for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(f"\n{line}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
