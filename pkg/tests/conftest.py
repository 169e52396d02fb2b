import numpy as np
import pytest

from priceopt import MarketQuote, Portfolio

EXAMPLE_COMPETITORS = (438.0, 457.0, 477.0, 492.0, 532.0, 596.0, 654.0, 675.0, 733.0)


@pytest.fixture
def example_quote():
    """A company quote of 568 against nine competitors, bounds (-0.2, 0.2)."""
    return MarketQuote(1, 568.0, EXAMPLE_COMPETITORS, -0.2, 0.2)


def random_portfolio(rng, n, k=4, bounds=(-0.2, 0.2)):
    """Company premiums in (400, 2000) with competitors within -10% / +15%."""
    base = rng.uniform(400.0, 2000.0, size=n)
    comps = base[:, None] * rng.uniform(0.9, 1.15, size=(n, k))
    return Portfolio.from_arrays(base, comps, bounds[0], bounds[1])


def single(base=100.0, competitors=(90.0, 110.0), bounds=(-0.2, 0.2)):
    return Portfolio((MarketQuote(1, base, competitors, *bounds),))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


def record_criterion(number, title, passed, detail):
    """Remember one acceptance outcome; printed together at the end of the run."""
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
