"""Sequential quadratic programming for the differentiable conversion models.

Each iteration linearises the business constraints around the current premium
changes, solves a convex QP for the step, and backtracks along it until an
exact l1 merit function decreases enough. The Hessian model is a damped BFGS
approximation of the Lagrangian Hessian.

Internally the problem is rescaled so the objective and constraints are of
order one: the volume objective is divided by the total base premium, the count
objective by ``N``, and volume constraints by the total base premium. KKT
residuals, multipliers and merit values reported by this module are in those
scaled units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .conversion import ConversionModel
from .exceptions import UnsupportedModelError, ValidationError
from .market import Portfolio
from .objectives import (
    VOLUME,
    PenaltyConfig,
    ProblemSpec,
    batch_evaluate,
    constraint_grads,
    is_feasible,
    objective_grad,
    penalized_objective,
)
from .qp import QpSubproblem, solve_qp
from .results import SolverResult
from .simulator import make_rng

TRACE_COLUMNS = ("iter", "phi", "kkt_residual", "alpha")


@dataclass(frozen=True)
class SqpConfig:
    """Iteration limits and line-search settings.

    Backtracking tries ``alpha = 1, 1/2, 1/4, ...`` and gives up after
    ``max_halvings`` halvings. ``n_starts`` only matters for
    :func:`multistart_sqp`.
    """

    max_iterations: int = 200
    kkt_tolerance: float = 1e-6
    max_halvings: int = 10
    armijo: float = 1e-4
    merit_r_margin: float = 2.0
    merit_r_initial: float = 1.0
    elastic_weight: float = 1e4
    n_starts: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.kkt_tolerance > 0:
            raise ValidationError("must be > 0", "kkt_tolerance")
        if self.max_iterations < 0:
            raise ValidationError("must be >= 0", "max_iterations")
        if not self.merit_r_margin > 1:
            raise ValidationError("must be > 1", "merit_r_margin")
        if not 0 < self.armijo < 1:
            raise ValidationError("must lie in (0, 1)", "armijo")
        if self.n_starts < 1:
            raise ValidationError("must be >= 1", "n_starts")


@dataclass
class SqpState:
    """Current iterate, multipliers and Hessian model.

    ``lam`` holds the multipliers of the two general constraints, ``mu`` and
    ``gamma`` those of the upper and lower box rows.
    """

    delta: np.ndarray
    Q: np.ndarray
    lam: np.ndarray = field(default_factory=lambda: np.zeros(2))
    mu: Optional[np.ndarray] = None
    gamma: Optional[np.ndarray] = None
    r: float = 1.0

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float)
        n = self.delta.size
        self.mu = np.zeros(n) if self.mu is None else np.asarray(self.mu, dtype=float)
        self.gamma = np.zeros(n) if self.gamma is None else np.asarray(self.gamma, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)

    def max_multiplier(self) -> float:
        return float(max(np.max(np.abs(self.lam), initial=0.0),
                         np.max(np.abs(self.mu), initial=0.0),
                         np.max(np.abs(self.gamma), initial=0.0)))


class _Scaled:
    """Objective ``f`` (to minimise) and constraints ``c <= 0`` in scaled units."""

    def __init__(self, spec: ProblemSpec, portfolio: Portfolio, model: ConversionModel):
        if not getattr(model, "differentiable", True):
            raise UnsupportedModelError(
                f"{type(model).__name__} has no derivative; use the genetic algorithm")
        self.spec, self.portfolio, self.model = spec, portfolio, model
        total = float(np.sum(portfolio.base))
        if spec.objective == VOLUME:
            self.obj_scale, self.con_scale = total, 1.0
        else:
            self.obj_scale, self.con_scale = float(portfolio.n), total

    def values(self, delta):
        obj, h1, h2 = batch_evaluate(self.spec, self.portfolio, self.model, delta)
        return -float(obj) / self.obj_scale, np.array([h1, h2]) / self.con_scale

    def grads(self, delta):
        g = objective_grad(self.spec, self.portfolio, self.model, delta)
        J = constraint_grads(self.spec, self.portfolio, self.model, delta)
        return -g / self.obj_scale, J / self.con_scale


def build_qp(state: SqpState, spec: ProblemSpec, portfolio: Portfolio, model: ConversionModel,
             elastic_weight: Optional[float] = 1e4, _scaled: Optional[_Scaled] = None) -> QpSubproblem:
    """Quadratic model of the scaled problem around ``state.delta``.

    Box rows become bounds on the step: ``lower - delta <= s <= upper - delta``.
    """
    prob = _scaled or _Scaled(spec, portfolio, model)
    _, c = prob.values(state.delta)
    g, J = prob.grads(state.delta)
    return QpSubproblem(
        Q=state.Q, g=g, A=J, b=-c,
        lower=portfolio.lower - state.delta,
        upper=portfolio.upper - state.delta,
        elastic_weight=elastic_weight,
    )


def bfgs_update(Q, s_step, y) -> np.ndarray:
    """Damped BFGS update; stays symmetric positive definite."""
    Q = np.asarray(Q, dtype=float)
    s = np.asarray(s_step, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.linalg.norm(s) < 1e-14:
        return Q.copy()
    Qs = Q @ s
    sQs = float(s @ Qs)
    sy = float(s @ y)
    theta = 1.0 if sy >= 0.2 * sQs else 0.8 * sQs / (sQs - sy)
    y_hat = theta * y + (1.0 - theta) * Qs
    Q_new = Q - np.outer(Qs, Qs) / sQs + np.outer(y_hat, y_hat) / float(y_hat @ s)
    return (Q_new + Q_new.T) / 2.0


def _box_violation(portfolio: Portfolio, delta) -> np.ndarray:
    return np.maximum(delta - portfolio.upper, 0.0) + np.maximum(portfolio.lower - delta, 0.0)


def merit_value(spec: ProblemSpec, portfolio: Portfolio, model: ConversionModel, delta_vec,
                r: float, scaled: bool = False) -> float:
    """Exact l1 merit: ``-objective + r * (sum of positive constraint parts)``.

    Box rows count too, so points outside the box are accepted here.
    """
    delta = np.asarray(delta_vec, dtype=float)
    inside = np.clip(delta, portfolio.lower, portfolio.upper)
    obj, h1, h2 = batch_evaluate(spec, portfolio, model, inside)
    obj_scale = con_scale = 1.0
    if scaled:
        prob = _Scaled(spec, portfolio, model)
        obj_scale, con_scale = prob.obj_scale, prob.con_scale
    violation = (max(float(h1), 0.0) + max(float(h2), 0.0)) / con_scale
    violation += float(np.sum(_box_violation(portfolio, delta)))
    return -float(obj) / obj_scale + r * violation


def _lagrangian_grad(g, J, state: SqpState) -> np.ndarray:
    return g + J.T @ state.lam + state.mu - state.gamma


def kkt_residual(state: SqpState, spec: ProblemSpec, portfolio: Portfolio,
                 model: ConversionModel, _scaled: Optional[_Scaled] = None) -> float:
    """Largest violation among stationarity, feasibility, complementarity and
    multiplier signs, in scaled units."""
    prob = _scaled or _Scaled(spec, portfolio, model)
    delta = np.clip(state.delta, portfolio.lower, portfolio.upper)
    _, c = prob.values(delta)
    g, J = prob.grads(delta)
    f_upper = state.delta - portfolio.upper
    f_lower = portfolio.lower - state.delta
    terms = [
        np.max(np.abs(_lagrangian_grad(g, J, state))),
        np.max(np.maximum(c, 0.0)),
        np.max(np.maximum(f_upper, 0.0)),
        np.max(np.maximum(f_lower, 0.0)),
        np.max(np.abs(state.lam * c)),
        np.max(np.abs(state.mu * f_upper)),
        np.max(np.abs(state.gamma * f_lower)),
        np.max(np.maximum(-state.lam, 0.0)),
        np.max(np.maximum(-state.mu, 0.0)),
        np.max(np.maximum(-state.gamma, 0.0)),
    ]
    return float(max(terms))


def initial_hessian(prob: _Scaled, portfolio: Portfolio, delta) -> np.ndarray:
    """Identity scaled by a finite-difference curvature estimate along all-ones."""
    n = portfolio.n
    eps = 1e-4
    direction = np.where(delta + eps <= portfolio.upper, 1.0, -1.0)
    g0, _ = prob.grads(delta)
    g1, _ = prob.grads(delta + eps * direction)
    curvature = abs(float((g1 - g0) @ direction)) / (eps * n)
    floor = max(1e-2 * float(np.max(np.abs(g0))), 1e-12)
    return np.eye(n) * max(curvature, floor)


def _result(prob: _Scaled, state: SqpState, status, iterations, kkt, trace, info) -> SolverResult:
    spec, portfolio, model = prob.spec, prob.portfolio, prob.model
    obj, h1, h2 = batch_evaluate(spec, portfolio, model, state.delta)
    return SolverResult(
        solver="sqp",
        delta=state.delta.copy(),
        objective=float(obj),
        residuals=(float(h1), float(h2)),
        feasible=bool(is_feasible(spec, h1, h2)),
        status=status,
        iterations=iterations,
        kkt_residual=kkt,
        relaxed=info.get("relaxed_steps", 0) > 0,
        multipliers={"h1": float(state.lam[0]), "h2": float(state.lam[1]),
                     "upper": state.mu.copy(), "lower": state.gamma.copy()},
        trace=trace,
        trace_columns=list(TRACE_COLUMNS),
        info=info,
    )


def run_sqp(spec: ProblemSpec, portfolio: Portfolio, model: ConversionModel,
            config: SqpConfig = SqpConfig(), start=None) -> SolverResult:
    """Single SQP run from ``start`` (projected into the box; zeros by default).

    Status is ``converged`` when the KKT residual drops below the tolerance,
    ``max_iterations`` when the budget runs out, and ``stalled`` when the line
    search cannot find a decrease.
    """
    prob = _Scaled(spec, portfolio, model)
    delta = np.zeros(portfolio.n) if start is None else np.asarray(start, dtype=float)
    if delta.shape != (portfolio.n,):
        raise ValidationError(f"expected {portfolio.n} values, got shape {delta.shape}", "start")
    delta = np.clip(delta, portfolio.lower, portfolio.upper)
    state = SqpState(delta=delta, Q=initial_hessian(prob, portfolio, delta),
                     r=config.merit_r_initial)
    trace, info = [], {"relaxed_steps": 0, "qp_fallbacks": 0}

    def merit(d):
        f, c = prob.values(d)
        return f + state.r * float(np.sum(np.maximum(c, 0.0)))

    status, kkt, t = "max_iterations", np.inf, 0
    for t in range(config.max_iterations + 1):
        qp = build_qp(state, spec, portfolio, model, config.elastic_weight, _scaled=prob)
        sol = solve_qp(qp)
        info["relaxed_steps"] += int(sol.relaxed)
        info["qp_fallbacks"] += int(sol.method != "pdas")
        state.lam, state.mu, state.gamma = sol.row, sol.upper, sol.lower
        state.r = max(state.r, config.merit_r_margin * state.max_multiplier())
        kkt = kkt_residual(state, spec, portfolio, model, _scaled=prob)
        phi = merit(state.delta)
        row = {"iter": t, "phi": phi, "kkt_residual": kkt, "alpha": 0.0}
        if kkt < config.kkt_tolerance:
            trace.append(row)
            status = "converged"
            break
        if t == config.max_iterations:
            trace.append(row)
            break

        s = sol.step
        f0, c0 = prob.values(state.delta)
        g0, J0 = prob.grads(state.delta)
        slope = (float(g0 @ s) - state.r * float(np.sum(np.maximum(c0, 0.0)))
                 + state.r * float(np.sum(np.maximum(c0 + J0 @ s, 0.0))))
        alpha, accepted = 1.0, None
        if slope < 0:
            for _ in range(config.max_halvings + 1):
                trial = np.clip(state.delta + alpha * s, portfolio.lower, portfolio.upper)
                phi_trial = merit(trial)
                if phi_trial <= phi + config.armijo * alpha * slope and phi_trial < phi:
                    accepted = (trial, phi_trial)
                    break
                alpha /= 2.0
        if accepted is None:
            trace.append(row)
            status = "stalled"
            break
        trial, phi_trial = accepted
        row["alpha"] = alpha
        row["phi_next"] = phi_trial
        trace.append(row)
        g1, J1 = prob.grads(trial)
        y = _lagrangian_grad(g1, J1, state) - _lagrangian_grad(g0, J0, state)
        state.Q = bfgs_update(state.Q, trial - state.delta, y)
        state.delta = trial

    info["merit_r"] = state.r
    info["scaling"] = {"objective": prob.obj_scale, "constraints": prob.con_scale}
    return _result(prob, state, status, t, kkt, trace, info)


def multistart_sqp(spec: ProblemSpec, portfolio: Portfolio, model: ConversionModel,
                   config: SqpConfig = SqpConfig(),
                   starts: Optional[Sequence] = None) -> SolverResult:
    """Run SQP from several starts and keep the best.

    Default starts: all zeros, then ``n_starts - 1`` uniform draws inside the
    box from the seeded generator. Converged runs are preferred; among them
    the lowest penalized objective wins, ties going to the earlier start.
    """
    if starts is None:
        rng = make_rng(config.seed)
        starts = [np.zeros(portfolio.n)]
        for _ in range(config.n_starts - 1):
            starts.append(rng.uniform(portfolio.lower, portfolio.upper))
    penalty = PenaltyConfig()
    r = penalty.initial_r(spec, portfolio, model)
    runs, summary = [], []
    for i, start in enumerate(starts):
        res = run_sqp(spec, portfolio, model, config, start)
        value = penalized_objective(spec, penalty, portfolio, model, res.delta, r=r)
        runs.append((res.status != "converged", value, i, res))
        summary.append({"start": i, "status": res.status, "objective": res.objective,
                        "penalized": value, "kkt_residual": res.kkt_residual})
    _, _, chosen, best = min(runs, key=lambda item: item[:3])
    best.info["starts"] = summary
    best.info["chosen_start"] = chosen
    best.info["seed"] = config.seed
    return best
