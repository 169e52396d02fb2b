"""Brute-force optimum over a finite grid of premium changes.

Only meant for small portfolios: it checks every combination, so the work is
``grid_size ** N``. Used as ground truth for the GA and SQP solvers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .conversion import ConversionModel, probabilities
from .exceptions import CombinationCapError, ValidationError
from .market import DeltaDomain, Portfolio
from .objectives import VOLUME, ProblemSpec, is_feasible
from .results import SolverResult

CHUNK = 1 << 16


@dataclass(frozen=True)
class OracleConfig:
    """Grid to enumerate: explicit ``values`` shared by all customers, or a
    per-customer evenly spaced grid of ``resolution`` points between the bounds.
    With neither, the problem's discrete domain is used."""

    values: Optional[Sequence[float]] = None
    resolution: Optional[int] = None
    max_combinations: int = 10 ** 7

    def __post_init__(self):
        if self.values is not None and self.resolution is not None:
            raise ValidationError("give values or resolution, not both", "grid")
        if self.resolution is not None and self.resolution < 1:
            raise ValidationError("must be >= 1", "resolution")


def _grids(spec: ProblemSpec, portfolio: Portfolio, config: OracleConfig) -> np.ndarray:
    n = portfolio.n
    if config.resolution is not None:
        if config.resolution == 1:
            return ((portfolio.lower + portfolio.upper) / 2)[:, None]
        return np.linspace(portfolio.lower, portfolio.upper, config.resolution, axis=1)
    if config.values is not None:
        values = np.unique(np.asarray(config.values, dtype=float))
        DeltaDomain.discrete(values).check(portfolio)
    elif spec.delta_domain.is_discrete:
        spec.delta_domain.check(portfolio)
        values = np.asarray(spec.delta_domain.values)
    else:
        raise ValidationError("a continuous domain needs values or resolution", "grid")
    return np.broadcast_to(values, (n, values.size))


def exhaustive_search(spec: ProblemSpec, portfolio: Portfolio, model: ConversionModel,
                      config: OracleConfig = OracleConfig()) -> SolverResult:
    """Best feasible grid combination; the least-violating one if none is feasible.

    Ties on the objective go to the lexicographically smallest delta vector.
    """
    grids = _grids(spec, portfolio, config)
    n, g = grids.shape
    required = g ** n
    if required > config.max_combinations:
        raise CombinationCapError(required, config.max_combinations)

    # Per-customer lookup tables; one combination sums one entry per row.
    probs = probabilities(model, portfolio, grids.T).T
    vols = portfolio.base[:, None] * (1.0 + grids) * probs
    lo, hi = spec.bounds
    rows = np.arange(n)

    best = None  # (feasible, score, index); higher score is better
    for start in range(0, required, CHUNK):
        idx = np.arange(start, min(start + CHUNK, required))
        digits = np.stack(np.unravel_index(idx, (g,) * n), axis=1)
        count = probs[rows, digits].sum(axis=1)
        volume = vols[rows, digits].sum(axis=1)
        if spec.objective == VOLUME:
            obj, h1, h2 = volume, count / n - hi, lo - count / n
        else:
            obj, h1, h2 = count, volume - hi, lo - volume
        feas = is_feasible(spec, h1, h2)
        violation = np.maximum(h1, 0.0) + np.maximum(h2, 0.0)
        if feas.any():
            score = np.where(feas, obj, -np.inf)
            candidate = (True, float(score.max()))
        else:
            score = -violation
            candidate = (False, float(score.max()))
        # argmax returns the first maximiser, i.e. the smallest index in the chunk.
        k = int(np.argmax(score))
        key = (candidate[0], candidate[1])
        if best is None or key > best[:2]:
            best = (key[0], key[1], int(idx[k]))

    digits = np.array(np.unravel_index(best[2], (g,) * n))
    delta = grids[rows, digits]
    count = probs[rows, digits].sum()
    volume = vols[rows, digits].sum()
    if spec.objective == VOLUME:
        obj, h1, h2 = volume, count / n - hi, lo - count / n
    else:
        obj, h1, h2 = count, volume - hi, lo - volume
    return SolverResult(
        solver="oracle",
        delta=np.array(delta, dtype=float),
        objective=float(obj),
        residuals=(float(h1), float(h2)),
        feasible=bool(best[0]),
        status="exhaustive",
        iterations=required,
        info={"grid_size": g, "combinations": required},
    )
