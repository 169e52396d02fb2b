"""Synthetic market generator.

For every customer:

1. draw the company premium ``P0`` (75% uniform on (400, 1600), the rest
   uniform on (1600, 2000));
2. draw the company's relative market position ``u`` uniform on (0.25, 0.75);
3. derive the market median ``Pm = P0 / (1 + (upb - lwb) * (u - 0.5))`` and the
   cheapest / dearest offers ``Pm * (1 + lwb)`` and ``Pm * (1 + upb)``;
4. draw ``n_other`` further competitor premiums uniformly between those two,
   redrawing any that equal ``P0`` exactly;
5. shuffle the competitor offers into columns ``P1 .. Pk``.

Random numbers come from ``numpy.random.Generator(PCG64(seed))`` consumed in the
order above, one customer at a time.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ValidationError
from .market import MarketQuote, Portfolio

RNG_NAME = "numpy.random.PCG64"


@dataclass(frozen=True)
class SimConfig:
    n: int = 1000
    base_low: float = 400.0
    base_high: float = 2000.0
    cheap_share: float = 0.75
    split_point: float = 1600.0
    rank_low: float = 0.25
    rank_high: float = 0.75
    lwb: float = -0.10
    upb: float = 0.15
    n_other: int = 7
    delta_lower: float = -0.20
    delta_upper: float = 0.20
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("must be >= 1", "n")
        if not self.base_low < self.split_point < self.base_high:
            raise ValidationError("need base_low < split_point < base_high", "split_point")
        if not 0.0 < self.rank_low < self.rank_high < 1.0:
            raise ValidationError("need 0 < rank_low < rank_high < 1", "rank_low")
        if not self.lwb < 0.0 < self.upb:
            raise ValidationError("need lwb < 0 < upb", "lwb")
        if not 0.0 <= self.cheap_share <= 1.0:
            raise ValidationError("must lie in [0, 1]", "cheap_share")
        if self.n_other < 0:
            raise ValidationError("must be >= 0", "n_other")

    def to_dict(self):
        return asdict(self)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def gen_base_premium(config: SimConfig, rng: np.random.Generator) -> float:
    if rng.random() < config.cheap_share:
        return float(rng.uniform(config.base_low, config.split_point))
    return float(rng.uniform(config.split_point, config.base_high))


def median_premium(p0: float, u: float, lwb: float = -0.10, upb: float = 0.15) -> float:
    """Market median premium for a company at relative position ``u`` quoting ``p0``."""
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie in (0, 1)")
    return p0 / (1.0 + (upb - lwb) * (u - 0.5))


def market_range(p0: float, u: float, lwb: float = -0.10, upb: float = 0.15):
    """``(P_min, P_m, P_max)`` for one offer."""
    pm = median_premium(p0, u, lwb, upb)
    return pm * (1.0 + lwb), pm, pm * (1.0 + upb)


def gen_quote(config: SimConfig, rng: np.random.Generator, customer_id: int = 1) -> MarketQuote:
    p0 = gen_base_premium(config, rng)
    u = float(rng.uniform(config.rank_low, config.rank_high))
    p_min, _, p_max = market_range(p0, u, config.lwb, config.upb)
    others = rng.uniform(p_min, p_max, size=config.n_other)
    clash = others == p0
    while clash.any():
        others[clash] = rng.uniform(p_min, p_max, size=int(clash.sum()))
        clash = others == p0
    offers = np.concatenate([[p_min, p_max], others])
    offers = offers[rng.permutation(offers.size)]
    return MarketQuote(customer_id, p0, tuple(offers), config.delta_lower, config.delta_upper)


def simulate_portfolio(config: SimConfig) -> tuple[Portfolio, dict]:
    """Generate ``config.n`` quotes and their summary statistics."""
    rng = make_rng(config.seed)
    quotes = tuple(gen_quote(config, rng, j + 1) for j in range(config.n))
    portfolio = Portfolio(quotes)
    return portfolio, premium_statistics(portfolio)


STAT_ROWS = ("Mean", "Min", "Q1", "Q2", "Q3", "Max")


def premium_statistics(portfolio: Portfolio) -> dict[str, dict[str, float]]:
    """Mean, min, quartiles and max of every premium column ``P0 .. Pk``."""
    columns = np.column_stack([portfolio.base, portfolio.competitors])
    q1, q2, q3 = np.percentile(columns, [25, 50, 75], axis=0)
    rows = {
        "Mean": columns.mean(axis=0),
        "Min": columns.min(axis=0),
        "Q1": q1,
        "Q2": q2,
        "Q3": q3,
        "Max": columns.max(axis=0),
    }
    names = [f"P{i}" for i in range(columns.shape[1])]
    return {stat: {name: float(v) for name, v in zip(names, values)}
            for stat, values in rows.items()}


def format_statistics(stats: dict[str, dict[str, float]]) -> str:
    names = list(next(iter(stats.values())))
    lines = ["stat  " + "".join(f"{n:>9}" for n in names)]
    for stat in STAT_ROWS:
        lines.append(f"{stat:<6}" + "".join(f"{stats[stat][n]:9.0f}" for n in names))
    return "\n".join(lines)
