"""Acceptance-probability models: how likely a customer takes the offered premium.

Three families are provided:

* :class:`StepParams` -- driven by where the offered premium sits among the
  competitor premiums, either as the clamped linear interpolation between the
  cheapest and dearest offer or as a piecewise-constant staircase whose steps
  sit halfway between consecutive competitor premiums;
* :class:`LinearParams` -- ``alpha + beta * delta`` clipped to ``[0, 1]``;
* :class:`LogisticParams` -- ``1 / (1 + exp(-(logit(base_rate) + T * delta)))``.

The vectorised entry points (:func:`probabilities`, :func:`probability_slopes`)
accept a ``delta`` array whose last axis runs over customers, so a whole GA
population can be scored in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .exceptions import DomainError, UnsupportedModelError, ValidationError
from .market import MarketQuote, Portfolio

PIECEWISE_CONSTANT = "piecewise_constant"
CLAMPED_LINEAR = "clamped_linear"


def _as_param(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim > 1:
        raise ValidationError("must be a scalar or a 1-D sequence", name)
    if arr.ndim == 0:
        return float(arr)
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StepParams:
    """Competition-driven model anchored at ``c1`` (cheapest) and ``c2`` (dearest)."""

    c1: float = 0.75
    c2: float = 0.30
    mode: str = PIECEWISE_CONSTANT

    def __post_init__(self):
        if not 0.0 < self.c2 < self.c1 <= 1.0:
            raise ValidationError("need 0 < c2 < c1 <= 1", "c1/c2")
        if self.mode not in (PIECEWISE_CONSTANT, CLAMPED_LINEAR):
            raise ValidationError(f"unknown step mode {self.mode!r}", "mode")

    differentiable = False


@dataclass(frozen=True, eq=False)
class LinearParams:
    """``pi = clip(alpha + beta * delta, 0, 1)``; scalars or one value per customer."""

    alpha: Union[float, np.ndarray]
    beta: Union[float, np.ndarray]

    def __post_init__(self):
        alpha = _as_param(self.alpha, "alpha")
        beta = _as_param(self.beta, "beta")
        if np.any(np.asarray(alpha) <= 0) or np.any(np.asarray(alpha) > 1):
            raise ValidationError("must lie in (0, 1]", "alpha")
        if np.any(np.asarray(beta) > 0):
            raise ValidationError("must be <= 0", "beta")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    differentiable = True

    def at(self, j: int) -> "LinearParams":
        return LinearParams(np.asarray(self.alpha)[j] if np.ndim(self.alpha) else self.alpha,
                            np.asarray(self.beta)[j] if np.ndim(self.beta) else self.beta)


@dataclass(frozen=True, eq=False)
class LogisticParams:
    """Logistic price response with elasticity ``T < 0``.

    ``base_rate`` is the acceptance probability before any premium change. When
    omitted it is taken from ``anchor`` (a clamped-linear step model) at
    ``delta = 0``, so the competitive position still sets the starting level.
    """

    elasticity: Union[float, np.ndarray]
    base_rate: Union[float, np.ndarray, None] = None
    anchor: StepParams = field(default_factory=lambda: StepParams(mode=CLAMPED_LINEAR))

    def __post_init__(self):
        t = _as_param(self.elasticity, "elasticity")
        if np.any(np.asarray(t) >= 0):
            raise ValidationError("must be < 0", "elasticity")
        object.__setattr__(self, "elasticity", t)
        if self.base_rate is not None:
            b = _as_param(self.base_rate, "base_rate")
            if np.any(np.asarray(b) <= 0) or np.any(np.asarray(b) >= 1):
                raise ValidationError("must lie strictly inside (0, 1)", "base_rate")
            object.__setattr__(self, "base_rate", b)

    differentiable = True

    def at(self, j: int) -> "LogisticParams":
        def pick(v):
            return v if v is None or np.ndim(v) == 0 else np.asarray(v)[j]

        return LogisticParams(pick(self.elasticity), pick(self.base_rate), self.anchor)


ConversionModel = Union[StepParams, LinearParams, LogisticParams]


def _distinct_sorted(premiums) -> np.ndarray:
    return np.unique(np.asarray(premiums, dtype=float))


def jump_points(quote: MarketQuote) -> list[float]:
    """Premiums at which the staircase changes level.

    These are the midpoints of consecutive distinct competitor premiums.
    """
    s = _distinct_sorted(quote.competitor_premiums)
    if s.size < 2:
        raise ValidationError("needs two distinct competitor premiums",
                              "competitor_premiums", quote.customer_id)
    return [float(v) for v in (s[:-1] + s[1:]) / 2.0]


def _interpolate(c1, c2, premium, lo, hi):
    # Clamped-linear level; shared by both step modes so they agree bit for bit
    # at competitor premiums.
    return np.clip(c1 + (c2 - c1) * (premium - lo) / (hi - lo), c2, c1)


class _StepTables:
    """Per-portfolio arrays the step model needs, padded to a rectangle."""

    def __init__(self, portfolio: Portfolio):
        comps = portfolio.competitors
        n, k = comps.shape
        self.lo = comps.min(axis=1)
        self.hi = comps.max(axis=1)
        self.jumps = np.full((n, max(k - 1, 1)), np.inf)
        self.anchors = np.empty((n, k))
        for j in range(n):
            s = _distinct_sorted(comps[j])
            self.jumps[j, : s.size - 1] = (s[:-1] + s[1:]) / 2.0
            self.anchors[j, : s.size] = s
            self.anchors[j, s.size:] = s[-1]


def _step_tables(portfolio: Portfolio) -> _StepTables:
    cached = portfolio.__dict__.get("_step_tables")
    if cached is None:
        cached = _StepTables(portfolio)
        portfolio.__dict__["_step_tables"] = cached
    return cached


def _step_probs(model: StepParams, portfolio: Portfolio, delta):
    tables = _step_tables(portfolio)
    premium = portfolio.base * (1.0 + delta)
    if model.mode == CLAMPED_LINEAR:
        return _interpolate(model.c1, model.c2, premium, tables.lo, tables.hi)
    idx = np.sum(premium[..., None] > tables.jumps, axis=-1)
    anchors = np.broadcast_to(tables.anchors, idx.shape + tables.anchors.shape[-1:])
    anchor = np.take_along_axis(anchors, idx[..., None], axis=-1)[..., 0]
    return _interpolate(model.c1, model.c2, anchor, tables.lo, tables.hi)


def logistic_base_rate(model: LogisticParams, portfolio: Portfolio) -> np.ndarray:
    """Acceptance probability at ``delta = 0`` for every customer."""
    if model.base_rate is not None:
        return np.broadcast_to(np.asarray(model.base_rate, dtype=float), (portfolio.n,))
    return _step_probs(model.anchor, portfolio, np.zeros(portfolio.n))


def _logistic_probs(model: LogisticParams, portfolio: Portfolio, delta):
    b = logistic_base_rate(model, portfolio)
    z = np.log(b) - np.log1p(-b) + model.elasticity * delta
    return 1.0 / (1.0 + np.exp(-z))


def probabilities(model: ConversionModel, portfolio: Portfolio, delta) -> np.ndarray:
    """Acceptance probabilities for ``delta`` of shape ``(..., N)``; no bound checks."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape[-1:] != (portfolio.n,):
        raise DomainError(f"delta has {delta.shape[-1:]} entries, portfolio has {portfolio.n}")
    if isinstance(model, StepParams):
        return _step_probs(model, portfolio, delta)
    if isinstance(model, LinearParams):
        return np.clip(model.alpha + model.beta * delta, 0.0, 1.0)
    if isinstance(model, LogisticParams):
        return _logistic_probs(model, portfolio, delta)
    raise UnsupportedModelError(f"unknown conversion model {type(model).__name__}")


def probability_slopes(model: ConversionModel, portfolio: Portfolio, delta) -> np.ndarray:
    """Derivative of each customer's acceptance probability w.r.t. their own delta."""
    delta = np.asarray(delta, dtype=float)
    if isinstance(model, LinearParams):
        raw = model.alpha + model.beta * delta
        inside = (raw > 0.0) & (raw < 1.0)
        return np.where(inside, np.broadcast_to(model.beta, raw.shape), 0.0)
    if isinstance(model, LogisticParams):
        p = probabilities(model, portfolio, delta)
        return model.elasticity * p * (1.0 - p)
    raise UnsupportedModelError(
        f"{type(model).__name__} is not differentiable; use the genetic algorithm")


def _check_delta(quote: MarketQuote, delta: float):
    if not quote.delta_lower <= delta <= quote.delta_upper:
        raise DomainError(
            f"delta={delta} outside [{quote.delta_lower}, {quote.delta_upper}] "
            f"for customer {quote.customer_id}")


def _check_scalar_params(model):
    params = []
    if isinstance(model, LinearParams):
        params = [model.alpha, model.beta]
    elif isinstance(model, LogisticParams):
        params = [model.elasticity, model.base_rate]
    if any(p is not None and np.ndim(p) for p in params):
        raise ValueError("per-customer parameters: select one customer with model.at(j)")


def acceptance_prob(model: ConversionModel, quote: MarketQuote, delta: float) -> float:
    """Probability that the customer behind ``quote`` accepts ``base * (1 + delta)``."""
    _check_delta(quote, delta)
    _check_scalar_params(model)
    return float(probabilities(model, Portfolio((quote,)), np.array([delta]))[0])


def acceptance_prob_grad(model: ConversionModel, quote: MarketQuote, delta: float) -> float:
    """d(acceptance_prob)/d(delta); step models raise :class:`UnsupportedModelError`."""
    if isinstance(model, StepParams):
        raise UnsupportedModelError("step models are not differentiable; use the genetic algorithm")
    _check_delta(quote, delta)
    _check_scalar_params(model)
    return float(probability_slopes(model, Portfolio((quote,)), np.array([delta]))[0])
