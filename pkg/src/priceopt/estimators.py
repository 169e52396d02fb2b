"""Scikit-learn style wrappers around the solvers.

``fit(X)`` optimises the premium changes for the market ``X`` (a
:class:`Portfolio` or a premium matrix, see :func:`check_market`);
``transform`` returns them as a column, ``predict`` the offered premiums and
``score`` the achieved objective.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .conversion import LogisticParams, StepParams
from .exceptions import UnsupportedModelError, ValidationError
from .ga import GaConfig, run_ga
from .market import DeltaDomain
from .objectives import VOLUME, ProblemSpec
from .oracle import OracleConfig, exhaustive_search
from .sqp import SqpConfig, multistart_sqp
from .validation import check_market


class _PriceOptimizer(TransformerMixin, BaseEstimator):
    def _spec(self) -> ProblemSpec:
        domain = (DeltaDomain.continuous() if self.delta_values is None
                  else DeltaDomain.discrete(self.delta_values))
        return ProblemSpec(self.objective, count_bounds=self.count_bounds,
                           volume_bounds=self.volume_bounds, delta_domain=domain)

    def _model(self):
        return StepParams() if self.model is None else self.model

    def _solve(self, spec, portfolio, model):
        raise NotImplementedError

    def fit(self, X, y=None):
        portfolio = check_market(X, self.delta_bounds)
        model = self._model()
        result = self._solve(self._spec(), portfolio, model)
        self.portfolio_ = portfolio
        self.model_ = model
        self.result_ = result
        self.delta_ = result.delta
        self.objective_ = result.objective
        self.feasible_ = result.feasible
        self.n_features_in_ = portfolio.k + 1
        return self

    def _fitted_market(self, X):
        check_is_fitted(self, "delta_")
        portfolio = check_market(X, self.delta_bounds)
        same = (portfolio.n == self.portfolio_.n
                and np.array_equal(portfolio.base, self.portfolio_.base)
                and np.array_equal(portfolio.competitors, self.portfolio_.competitors))
        if not same:
            raise ValidationError("X differs from the market the optimizer was fitted on", "X")
        return portfolio

    def transform(self, X):
        """Optimal premium changes as an ``(N, 1)`` column."""
        self._fitted_market(X)
        return self.delta_.reshape(-1, 1)

    def predict(self, X):
        """Offered premiums ``P0 * (1 + delta)``."""
        portfolio = self._fitted_market(X)
        return portfolio.base * (1.0 + self.delta_)

    def score(self, X, y=None):
        """Achieved objective (expected volume or expected count)."""
        self._fitted_market(X)
        return self.objective_


class GeneticPriceOptimizer(_PriceOptimizer):
    """Penalty genetic algorithm; works with every conversion model."""

    def __init__(self, objective=VOLUME, count_bounds=None, volume_bounds=None, model=None,
                 delta_bounds=(-0.2, 0.2), delta_values=None, population_size=100,
                 crossover_prob=0.8, mutation_prob=0.01, max_generations=500,
                 bits_per_gene=12, random_state=0):
        self.objective = objective
        self.count_bounds = count_bounds
        self.volume_bounds = volume_bounds
        self.model = model
        self.delta_bounds = delta_bounds
        self.delta_values = delta_values
        self.population_size = population_size
        self.crossover_prob = crossover_prob
        self.mutation_prob = mutation_prob
        self.max_generations = max_generations
        self.bits_per_gene = bits_per_gene
        self.random_state = random_state

    def _solve(self, spec, portfolio, model):
        config = GaConfig(self.population_size, self.crossover_prob, self.mutation_prob,
                          self.max_generations, self.bits_per_gene, int(self.random_state))
        return run_ga(spec, portfolio, model, config)


class SQPPriceOptimizer(_PriceOptimizer):
    """Multi-start SQP; needs a differentiable model (logistic by default)."""

    def __init__(self, objective=VOLUME, count_bounds=None, volume_bounds=None, model=None,
                 delta_bounds=(-0.2, 0.2), max_iterations=200, kkt_tolerance=1e-6,
                 n_starts=5, random_state=0):
        self.objective = objective
        self.count_bounds = count_bounds
        self.volume_bounds = volume_bounds
        self.model = model
        self.delta_bounds = delta_bounds
        self.max_iterations = max_iterations
        self.kkt_tolerance = kkt_tolerance
        self.n_starts = n_starts
        self.random_state = random_state

    delta_values = None

    def _model(self):
        model = LogisticParams(elasticity=-1.0) if self.model is None else self.model
        if not getattr(model, "differentiable", True):
            raise UnsupportedModelError("SQP needs a linear or logistic model")
        return model

    def _solve(self, spec, portfolio, model):
        config = SqpConfig(max_iterations=self.max_iterations, kkt_tolerance=self.kkt_tolerance,
                           n_starts=self.n_starts, seed=int(self.random_state))
        return multistart_sqp(spec, portfolio, model, config)


class ExhaustivePriceOptimizer(_PriceOptimizer):
    """Brute-force search over a grid; small markets only."""

    def __init__(self, objective=VOLUME, count_bounds=None, volume_bounds=None, model=None,
                 delta_bounds=(-0.2, 0.2), delta_values=None, resolution=None,
                 max_combinations=10 ** 7):
        self.objective = objective
        self.count_bounds = count_bounds
        self.volume_bounds = volume_bounds
        self.model = model
        self.delta_bounds = delta_bounds
        self.delta_values = delta_values
        self.resolution = resolution
        self.max_combinations = max_combinations

    def _solve(self, spec, portfolio, model):
        config = OracleConfig(resolution=self.resolution, max_combinations=self.max_combinations)
        return exhaustive_search(spec, portfolio, model, config)
