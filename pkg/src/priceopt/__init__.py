"""Premium optimisation for insurance new business.

Choose a relative premium change per customer that maximises expected premium
volume or the expected number of new customers, given competitor quotes and a
model of how likely each customer is to accept the offer.
"""

from .conversion import (
    LinearParams,
    LogisticParams,
    StepParams,
    acceptance_prob,
    acceptance_prob_grad,
    jump_points,
    probabilities,
)
from .estimators import ExhaustivePriceOptimizer, GeneticPriceOptimizer, SQPPriceOptimizer
from .exceptions import (
    CombinationCapError,
    ConfigError,
    DomainError,
    PortfolioParseError,
    PriceOptError,
    UnsupportedModelError,
    ValidationError,
)
from .ga import GaConfig, run_ga
from .market import DeltaDomain, MarketQuote, Portfolio, load_portfolio, market_rank, save_portfolio
from .objectives import (
    COUNT,
    VOLUME,
    PenaltyConfig,
    ProblemSpec,
    constraint_grads,
    constraint_residuals,
    expected_count,
    expected_volume,
    objective_grad,
    objective_value,
    penalized_objective,
)
from .oracle import OracleConfig, exhaustive_search
from .results import SolverResult
from .scenario import ScenarioConfig, ScenarioReport, run_scenario
from .simulator import SimConfig, simulate_portfolio
from .sqp import SqpConfig, SqpState, multistart_sqp, run_sqp

__version__ = "0.1.0"
