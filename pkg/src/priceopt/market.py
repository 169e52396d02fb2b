"""Market data model: customer quotes, portfolios and premium-change domains."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import PortfolioParseError, ValidationError

CONTINUOUS = "continuous"
DISCRETE = "discrete"


@dataclass(frozen=True)
class MarketQuote:
    """One customer's quote from the company and the competing offers.

    ``delta_lower`` and ``delta_upper`` bound the relative premium change the
    company may apply, so the offered premium is ``base_premium * (1 + delta)``.
    """

    customer_id: int
    base_premium: float
    competitor_premiums: tuple[float, ...]
    delta_lower: float
    delta_upper: float

    def __post_init__(self):
        cid = self.customer_id
        object.__setattr__(self, "customer_id", int(cid))
        object.__setattr__(self, "base_premium", float(self.base_premium))
        object.__setattr__(
            self, "competitor_premiums", tuple(float(p) for p in self.competitor_premiums)
        )
        object.__setattr__(self, "delta_lower", float(self.delta_lower))
        object.__setattr__(self, "delta_upper", float(self.delta_upper))

        if not (math.isfinite(self.base_premium) and self.base_premium > 0):
            raise ValidationError("must be a positive finite premium", "base_premium", cid)
        comps = self.competitor_premiums
        if len(comps) < 1:
            raise ValidationError("at least one competitor premium is required",
                                  "competitor_premiums", cid)
        if any(not (math.isfinite(p) and p > 0) for p in comps):
            raise ValidationError("all competitor premiums must be positive",
                                  "competitor_premiums", cid)
        if min(comps) == max(comps):
            raise ValidationError("at least two distinct competitor premiums are required",
                                  "competitor_premiums", cid)
        for name in ("delta_lower", "delta_upper"):
            value = getattr(self, name)
            if not (-1.0 < value < 1.0):
                raise ValidationError("must lie in (-1, 1)", name, cid)
        if not self.delta_lower < self.delta_upper:
            raise ValidationError("delta_lower must be below delta_upper", "delta_lower", cid)

    @property
    def k(self) -> int:
        return len(self.competitor_premiums)


def market_rank(quote: MarketQuote, candidate_premium: float) -> int:
    """Position of ``candidate_premium`` in the market, 1 = cheapest.

    Only strictly cheaper competitors push the company down, so a tie with a
    competitor is resolved in the company's favour.
    """
    if not candidate_premium > 0:
        raise ValueError("candidate_premium must be positive")
    return 1 + sum(1 for p in quote.competitor_premiums if p < candidate_premium)


@dataclass(frozen=True)
class Portfolio:
    """An ordered, immutable collection of quotes sharing one competitor count.

    Array views (``base``, ``competitors``, ``lower``, ``upper``) are built once
    and marked read-only so solvers can vectorise over customers.
    """

    quotes: tuple[MarketQuote, ...]
    base: np.ndarray = field(init=False, repr=False, compare=False)
    competitors: np.ndarray = field(init=False, repr=False, compare=False)
    lower: np.ndarray = field(init=False, repr=False, compare=False)
    upper: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        quotes = tuple(self.quotes)
        object.__setattr__(self, "quotes", quotes)
        if not quotes:
            raise ValidationError("a portfolio needs at least one quote", "quotes")
        seen = set()
        k = quotes[0].k
        for q in quotes:
            if q.customer_id in seen:
                raise ValidationError("duplicate customer id", "customer_id", q.customer_id)
            seen.add(q.customer_id)
            if q.k != k:
                raise ValidationError(
                    f"has {q.k} competitor premiums but the portfolio uses {k}",
                    "competitor_premiums", q.customer_id)

        arrays = {
            "base": np.array([q.base_premium for q in quotes]),
            "competitors": np.array([q.competitor_premiums for q in quotes]),
            "lower": np.array([q.delta_lower for q in quotes]),
            "upper": np.array([q.delta_upper for q in quotes]),
        }
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.quotes)

    @property
    def n(self) -> int:
        return len(self.quotes)

    @property
    def k(self) -> int:
        return self.quotes[0].k

    @property
    def customer_ids(self) -> list[int]:
        return [q.customer_id for q in self.quotes]

    @classmethod
    def from_arrays(cls, base, competitors, lower, upper, customer_ids=None) -> "Portfolio":
        base = np.asarray(base, dtype=float)
        competitors = np.atleast_2d(np.asarray(competitors, dtype=float))
        n = base.shape[0]
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (n,))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (n,))
        if customer_ids is None:
            customer_ids = range(1, n + 1)
        quotes = tuple(
            MarketQuote(cid, base[j], tuple(competitors[j]), lower[j], upper[j])
            for j, cid in enumerate(customer_ids)
        )
        return cls(quotes)

    def with_bounds(self, lower, upper) -> "Portfolio":
        """Copy of the portfolio with new premium-change bounds."""
        return Portfolio.from_arrays(self.base, self.competitors, lower, upper,
                                     self.customer_ids)

    def ranks(self, premiums) -> np.ndarray:
        """Vectorised :func:`market_rank` for one candidate premium per customer."""
        premiums = np.asarray(premiums, dtype=float)
        return 1 + np.sum(self.competitors < premiums[:, None], axis=1)


@dataclass(frozen=True)
class DeltaDomain:
    """Where premium changes live: a continuous box or a shared discrete grid."""

    kind: str = CONTINUOUS
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, DISCRETE):
            raise ValidationError(f"unknown domain kind {self.kind!r}", "kind")
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if self.kind == DISCRETE:
            if not values:
                raise ValidationError("a discrete domain needs at least one value", "values")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValidationError("discrete values must be strictly increasing", "values")
        elif values:
            raise ValidationError("a continuous domain takes no values", "values")

    @classmethod
    def continuous(cls) -> "DeltaDomain":
        return cls(CONTINUOUS)

    @classmethod
    def discrete(cls, values: Iterable[float]) -> "DeltaDomain":
        return cls(DISCRETE, tuple(values))

    @classmethod
    def grid(cls, low: float, high: float, step: float) -> "DeltaDomain":
        """Evenly spaced grid such as -0.20, -0.15, ..., 0.20."""
        count = int(round((high - low) / step)) + 1
        return cls.discrete(round(low + i * step, 12) for i in range(count))

    @property
    def is_discrete(self) -> bool:
        return self.kind == DISCRETE

    def check(self, portfolio: Portfolio) -> None:
        """Raise if a grid value falls outside some customer's bounds."""
        if not self.is_discrete:
            return
        lo, hi = min(self.values), max(self.values)
        for q in portfolio.quotes:
            if lo < q.delta_lower or hi > q.delta_upper:
                raise ValidationError(
                    f"discrete values span [{lo}, {hi}] outside "
                    f"[{q.delta_lower}, {q.delta_upper}]", "delta_domain", q.customer_id)


def portfolio_header(k: int) -> list[str]:
    return ["customer_id"] + [f"P{i}" for i in range(k + 1)] + ["delta_lower", "delta_upper"]


def _parse_float(text, row, name):
    try:
        return float(text)
    except ValueError:
        raise PortfolioParseError(f"column '{name}' is not a number: {text!r}", row) from None


def load_portfolio(path, default_bounds: Sequence[float] | None = None) -> Portfolio:
    """Read a portfolio CSV with header ``customer_id,P0,P1,...,Pk,delta_lower,delta_upper``.

    Blank ``delta_lower``/``delta_upper`` cells fall back to ``default_bounds``.
    Row numbers in errors count the header as row 1.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise PortfolioParseError("file is empty", 1) from None
        if (len(header) < 5 or header[0] != "customer_id" or header[-2:] != ["delta_lower", "delta_upper"]):
            raise PortfolioParseError(
                "expected header customer_id,P0,P1,...,Pk,delta_lower,delta_upper", 1)
        k = len(header) - 4
        if header != portfolio_header(k):
            raise PortfolioParseError(
                "expected header customer_id,P0,P1,...,Pk,delta_lower,delta_upper", 1)

        quotes = []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise PortfolioParseError(
                    f"expected {len(header)} columns, found {len(row)}", row_no)
            cells = [c.strip() for c in row]
            try:
                cid = int(cells[0])
            except ValueError:
                raise PortfolioParseError(f"customer_id is not an integer: {cells[0]!r}",
                                          row_no) from None
            premiums = [_parse_float(c, row_no, header[i + 1]) for i, c in enumerate(cells[1:k + 2])]
            bounds = []
            for offset, name in enumerate(("delta_lower", "delta_upper")):
                cell = cells[k + 2 + offset]
                if cell:
                    bounds.append(_parse_float(cell, row_no, name))
                elif default_bounds is not None:
                    bounds.append(float(default_bounds[offset]))
                else:
                    raise PortfolioParseError(f"column '{name}' is empty", row_no)
            quotes.append(MarketQuote(cid, premiums[0], tuple(premiums[1:]), *bounds))
    if not quotes:
        raise ValidationError("a portfolio needs at least one quote", "quotes")
    return Portfolio(tuple(quotes))


def save_portfolio(portfolio: Portfolio, path) -> None:
    """Write ``portfolio`` in the format read by :func:`load_portfolio`.

    Floats are written with ``repr`` so a reload is exact.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(portfolio_header(portfolio.k))
        for q in portfolio.quotes:
            writer.writerow([q.customer_id, repr(q.base_premium),
                             *(repr(p) for p in q.competitor_premiums),
                             repr(q.delta_lower), repr(q.delta_upper)])
