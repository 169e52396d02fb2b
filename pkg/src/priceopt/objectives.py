"""Objective functions, business constraints and the exterior penalty.

Two problems are supported:

* ``volume``: maximise expected premium volume ``sum P_j (1 + d_j) pi_j``
  while the expected share of new customers ``mean(pi)`` stays in
  ``[l2, l1]``;
* ``count``: maximise the expected number of new customers ``sum pi_j`` while
  the expected volume stays in ``[C2, C1]``.

Constraint residuals follow the ``h <= 0`` convention: ``h1`` is the upper
bound, ``h2`` the lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conversion import ConversionModel, probabilities, probability_slopes
from .exceptions import DomainError, ValidationError
from .market import DeltaDomain, Portfolio

VOLUME = "volume"
COUNT = "count"


@dataclass(frozen=True)
class ProblemSpec:
    """What to maximise and which band the other quantity must stay in.

    ``count_bounds`` is ``(l2, l1)``: lower and upper share of new customers.
    ``volume_bounds`` is ``(C2, C1)``: lower and upper expected volume.
    """

    objective: str = VOLUME
    count_bounds: Optional[tuple[float, float]] = None
    volume_bounds: Optional[tuple[float, float]] = None
    delta_domain: DeltaDomain = field(default_factory=DeltaDomain.continuous)

    def __post_init__(self):
        if self.objective not in (VOLUME, COUNT):
            raise ValidationError(f"unknown objective {self.objective!r}", "objective")
        if (self.count_bounds is None) == (self.volume_bounds is None):
            raise ValidationError("set exactly one of count_bounds / volume_bounds", "bounds")
        if self.objective == VOLUME:
            if self.count_bounds is None:
                raise ValidationError("the volume objective is constrained by count_bounds",
                                      "count_bounds")
            lo, hi = (float(v) for v in self.count_bounds)
            if not 0.0 < lo < hi < 1.0:
                raise ValidationError("need 0 < l2 < l1 < 1", "count_bounds")
            object.__setattr__(self, "count_bounds", (lo, hi))
        else:
            if self.volume_bounds is None:
                raise ValidationError("the count objective is constrained by volume_bounds",
                                      "volume_bounds")
            lo, hi = (float(v) for v in self.volume_bounds)
            if not lo < hi:
                raise ValidationError("need C2 < C1", "volume_bounds")
            object.__setattr__(self, "volume_bounds", (lo, hi))

    @property
    def bounds(self) -> tuple[float, float]:
        return self.count_bounds if self.objective == VOLUME else self.volume_bounds


@dataclass(frozen=True)
class PenaltyConfig:
    """Exterior quadratic penalty ``r * (max(0, h1)^2 + max(0, h2)^2)``.

    ``r=None`` starts at ``1e3`` times the objective value at ``delta = 0``.
    The GA multiplies ``r`` by ``growth`` whenever its incumbent ends a
    generation infeasible, never going above ``cap``.
    """

    r: Optional[float] = None
    growth: float = 10.0
    cap: float = 1e12

    def __post_init__(self):
        if self.r is not None and not self.r > 0:
            raise ValidationError("must be > 0", "r")
        if not self.growth >= 1:
            raise ValidationError("must be >= 1", "growth")

    def initial_r(self, spec, portfolio, model) -> float:
        if self.r is not None:
            return float(self.r)
        scale = abs(objective_value(spec, portfolio, model, np.zeros(portfolio.n)))
        return min(1e3 * max(scale, 1.0), self.cap)


def _check_delta(portfolio: Portfolio, delta) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (portfolio.n,):
        raise DomainError(f"expected {portfolio.n} premium changes, got shape {delta.shape}")
    if np.any(delta < portfolio.lower) or np.any(delta > portfolio.upper):
        bad = int(np.argmax((delta < portfolio.lower) | (delta > portfolio.upper)))
        raise DomainError(
            f"delta[{bad}]={delta[bad]} outside [{portfolio.lower[bad]}, {portfolio.upper[bad]}]")
    return delta


# Batched kernels: delta has shape (..., N), results reduce the last axis.

def volume_of(portfolio, probs, delta):
    return np.sum(portfolio.base * (1.0 + delta) * probs, axis=-1)


def count_of(probs):
    return np.sum(probs, axis=-1)


def batch_evaluate(spec: ProblemSpec, portfolio: Portfolio, model: ConversionModel, delta):
    """Objective and residuals ``(obj, h1, h2)`` for a batch of delta vectors."""
    probs = probabilities(model, portfolio, delta)
    volume = volume_of(portfolio, probs, delta)
    count = count_of(probs)
    lo, hi = spec.bounds
    if spec.objective == VOLUME:
        share = count / portfolio.n
        return volume, share - hi, lo - share
    return count, volume - hi, lo - volume


def expected_volume(portfolio: Portfolio, model: ConversionModel, delta_vec) -> float:
    delta = _check_delta(portfolio, delta_vec)
    return float(volume_of(portfolio, probabilities(model, portfolio, delta), delta))


def expected_count(portfolio: Portfolio, model: ConversionModel, delta_vec) -> float:
    delta = _check_delta(portfolio, delta_vec)
    return float(count_of(probabilities(model, portfolio, delta)))


def objective_value(spec: ProblemSpec, portfolio, model, delta_vec) -> float:
    if spec.objective == VOLUME:
        return expected_volume(portfolio, model, delta_vec)
    return expected_count(portfolio, model, delta_vec)


def constraint_residuals(spec: ProblemSpec, portfolio, model, delta_vec) -> tuple[float, float]:
    """``(h1, h2)``; the point is feasible when both are <= 0."""
    delta = _check_delta(portfolio, delta_vec)
    _, h1, h2 = batch_evaluate(spec, portfolio, model, delta)
    return float(h1), float(h2)


def penalty_function(h):
    return np.square(np.maximum(h, 0.0))


def penalized_objective(spec: ProblemSpec, penalty: PenaltyConfig, portfolio, model,
                        delta_vec, r: Optional[float] = None) -> float:
    """``-objective + r * (phi(h1) + phi(h2))`` with ``phi(x) = max(0, x)^2``."""
    delta = _check_delta(portfolio, delta_vec)
    if r is None:
        r = penalty.initial_r(spec, portfolio, model)
    obj, h1, h2 = batch_evaluate(spec, portfolio, model, delta)
    return float(-obj + r * (penalty_function(h1) + penalty_function(h2)))


def _gradients(spec, portfolio, model, delta):
    probs = probabilities(model, portfolio, delta)
    slopes = probability_slopes(model, portfolio, delta)
    grad_volume = portfolio.base * probs + portfolio.base * (1.0 + delta) * slopes
    return grad_volume, slopes


def objective_grad(spec: ProblemSpec, portfolio, model, delta_vec) -> np.ndarray:
    """Gradient of the objective; coordinate ``j`` depends on ``delta_j`` only."""
    delta = _check_delta(portfolio, delta_vec)
    grad_volume, slopes = _gradients(spec, portfolio, model, delta)
    return grad_volume if spec.objective == VOLUME else slopes


def constraint_grads(spec: ProblemSpec, portfolio, model, delta_vec) -> np.ndarray:
    """Rows ``grad h1`` and ``grad h2``, shape ``(2, N)``."""
    delta = _check_delta(portfolio, delta_vec)
    grad_volume, slopes = _gradients(spec, portfolio, model, delta)
    g = slopes / portfolio.n if spec.objective == VOLUME else grad_volume
    return np.vstack([g, -g])


FEASIBILITY_TOL = 1e-6


def constraint_scale(spec: ProblemSpec) -> float:
    """Natural size of the constrained quantity (1 for shares, |C1| for volumes)."""
    if spec.objective == VOLUME:
        return 1.0
    return max(1.0, abs(spec.volume_bounds[1]))


def is_feasible(spec: ProblemSpec, h1, h2, tol: float = FEASIBILITY_TOL):
    """Feasibility with a tolerance relative to :func:`constraint_scale`."""
    return np.maximum(h1, h2) <= tol * constraint_scale(spec)
