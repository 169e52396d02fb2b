"""Input checks for the estimator interface."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .exceptions import ValidationError
from .market import Portfolio


def check_bounds(delta_bounds) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in delta_bounds)
    except (TypeError, ValueError) as exc:
        raise ValidationError("expected a (lower, upper) pair", "delta_bounds") from exc
    if not -1.0 < lo < hi < 1.0:
        raise ValidationError("need -1 < lower < upper < 1", "delta_bounds")
    return lo, hi


def check_market(X, delta_bounds=(-0.2, 0.2)) -> Portfolio:
    """A :class:`Portfolio` from a portfolio or a premium matrix.

    Matrix rows are customers; column 0 is the company premium and the
    remaining columns (at least two) are competitor premiums. Every row gets
    ``delta_bounds``.
    """
    if isinstance(X, Portfolio):
        return X
    X = check_array(X, dtype=np.float64, ensure_min_features=3)
    if np.any(X <= 0):
        raise ValidationError("premiums must be strictly positive", "X")
    lo, hi = check_bounds(delta_bounds)
    n = X.shape[0]
    return Portfolio.from_arrays(X[:, 0], X[:, 1:], np.full(n, lo), np.full(n, hi))
