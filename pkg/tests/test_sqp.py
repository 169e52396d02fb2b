import numpy as np
import pytest

from priceopt import (
    COUNT,
    VOLUME,
    LinearParams,
    LogisticParams,
    ProblemSpec,
    SqpConfig,
    SqpState,
    StepParams,
    UnsupportedModelError,
    ValidationError,
    constraint_residuals,
    multistart_sqp,
    objective_value,
    run_sqp,
)
from priceopt.qp import solve_qp
from priceopt.sqp import bfgs_update, build_qp, kkt_residual, merit_value

from conftest import random_portfolio, single

VACUOUS = ProblemSpec(VOLUME, count_bounds=(0.001, 0.999))
HALF4 = LogisticParams(elasticity=-4.0, base_rate=0.5)


def stationary_point(t=-4.0, lo=-0.2, hi=0.2):
    """Root of pi * (1 + (1 + d) * t * (1 - pi)) by bisection."""
    def f(d):
        p = 1.0 / (1.0 + np.exp(-t * d))
        return p * (1.0 + (1.0 + d) * t * (1.0 - p))
    a, b = lo, hi
    assert f(a) > 0 > f(b)
    while b - a > 1e-14:
        mid = 0.5 * (a + b)
        a, b = (mid, b) if f(mid) > 0 else (a, mid)
    return 0.5 * (a + b)


def test_bfgs_identity_case():
    e1 = np.array([1.0, 0.0])
    np.testing.assert_allclose(bfgs_update(np.eye(2), e1, e1), np.eye(2), atol=1e-15)


def test_bfgs_damping_keeps_positive_definite():
    Q = np.diag([2.0, 1.0])
    s = np.array([1.0, 0.5])
    y = np.array([-1.0, -0.2])
    new = bfgs_update(Q, s, y)
    np.linalg.cholesky(new)
    np.testing.assert_allclose(new, new.T)


@pytest.mark.parametrize("seed", range(5))
def test_bfgs_secant_condition(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(4, 4))
    Q = M @ M.T + np.eye(4)
    s, y = rng.normal(size=4), rng.normal(size=4)
    new = bfgs_update(Q, s, y)
    Qs, sQs, sy = Q @ s, s @ Q @ s, s @ y
    theta = 1.0 if sy >= 0.2 * sQs else 0.8 * sQs / (sQs - sy)
    y_hat = theta * y + (1 - theta) * Qs
    np.testing.assert_allclose(new @ s, y_hat, atol=1e-10)


def test_merit_is_negative_objective_when_feasible():
    value = merit_value(VACUOUS, single(), HALF4, np.zeros(1), r=100.0)
    assert value == -50.0


def test_merit_penalty_arithmetic():
    spec = ProblemSpec(VOLUME, count_bounds=(0.1, 0.58))
    value = merit_value(spec, single(), LinearParams(0.6, 0.0), np.zeros(1), r=50.0)
    assert value - (-60.0) == pytest.approx(1.0, rel=1e-9)


def test_box_rows_become_step_bounds(rng):
    portfolio = random_portfolio(rng, 4)
    delta = np.array([0.1, -0.1, 0.0, 0.15])
    state = SqpState(delta=delta, Q=np.eye(4))
    qp = build_qp(state, VACUOUS, portfolio, LogisticParams(-2.0))
    np.testing.assert_allclose(qp.lower, -0.2 - delta)
    np.testing.assert_allclose(qp.upper, 0.2 - delta)


def test_infeasible_start_steps_toward_feasibility(rng):
    portfolio = random_portfolio(rng, 10)
    model = LogisticParams(-3.0, base_rate=0.6)
    spec = ProblemSpec(VOLUME, count_bounds=(0.3, 0.5))
    state = SqpState(delta=np.zeros(10), Q=np.eye(10))
    h1, _ = constraint_residuals(spec, portfolio, model, np.zeros(10))
    assert h1 > 0
    qp = build_qp(state, spec, portfolio, model)
    sol = solve_qp(qp)
    assert not sol.relaxed
    assert qp.A[0] @ sol.step <= -h1 + 1e-12


def test_kkt_residual_zero_at_stationary_point():
    d = stationary_point()
    state = SqpState(delta=np.array([d]), Q=np.eye(1))
    assert kkt_residual(state, VACUOUS, single(), HALF4) < 1e-12


def test_kkt_residual_complementarity_term():
    spec = ProblemSpec(VOLUME, count_bounds=(0.1, 0.6))
    model = LinearParams(0.5, -0.1)
    state = SqpState(delta=np.zeros(1), Q=np.eye(1), lam=np.array([1.0, 0.0]))
    assert kkt_residual(state, spec, single(), model) >= 0.1 - 1e-12


def test_kkt_residual_ignores_inactive_box(rng):
    portfolio = random_portfolio(rng, 5)
    wide = portfolio.with_bounds(-0.5, 0.5)
    state = SqpState(delta=rng.uniform(-0.1, 0.1, 5), Q=np.eye(5))
    model = LogisticParams(-2.0)
    assert kkt_residual(state, VACUOUS, portfolio, model) == kkt_residual(state, VACUOUS, wide, model)


def test_single_customer_stationary_point():
    result = run_sqp(VACUOUS, single(), HALF4)
    assert result.status == "converged"
    assert result.delta[0] == pytest.approx(stationary_point(), abs=1e-6)
    assert round(result.delta[0], 3) == -0.198


def test_start_at_kkt_point_stops_immediately():
    d = stationary_point()
    result = run_sqp(VACUOUS, single(), HALF4, start=np.array([d]))
    assert result.status == "converged" and result.iterations <= 1
    assert result.delta[0] == pytest.approx(d, abs=1e-12)


def test_count_share_band_is_met():
    portfolio = random_portfolio(np.random.default_rng(8), 50)
    spec = ProblemSpec(VOLUME, count_bounds=(0.45, 0.50))
    result = run_sqp(spec, portfolio, LogisticParams(-4.0))
    assert result.status == "converged" and result.kkt_residual < 1e-6
    h1, h2 = constraint_residuals(spec, portfolio, LogisticParams(-4.0), result.delta)
    share = 0.50 + h1
    assert 0.45 - 1e-6 <= share <= 0.50 + 1e-6
    assert h2 <= 1e-6


def test_merit_trace_decreases_and_r_covers_multipliers():
    portfolio = random_portfolio(np.random.default_rng(21), 30)
    spec = ProblemSpec(COUNT, volume_bounds=(1.0, 2.0))
    base = run_sqp(ProblemSpec(VOLUME, count_bounds=(0.01, 0.99)), portfolio, LogisticParams(-1.0),
                   SqpConfig(max_iterations=0)).objective
    spec = ProblemSpec(COUNT, volume_bounds=(1.0 * base, 1.05 * base))
    result = run_sqp(spec, portfolio, LogisticParams(-1.0))
    phi = [row["phi"] for row in result.trace]
    assert all(b < a for a, b in zip(phi, phi[1:]))
    mults = result.multipliers
    biggest = max(abs(mults["h1"]), abs(mults["h2"]), np.max(mults["upper"]), np.max(mults["lower"]))
    assert result.info["merit_r"] >= 2.0 * biggest - 1e-12
    assert result.feasible


def test_step_model_rejected():
    with pytest.raises(UnsupportedModelError):
        run_sqp(VACUOUS, single(), StepParams())


def test_config_validation():
    with pytest.raises(ValidationError):
        SqpConfig(kkt_tolerance=0.0)
    with pytest.raises(ValidationError):
        SqpConfig(merit_r_margin=1.0)
    with pytest.raises(ValidationError):
        SqpConfig(n_starts=0)


def test_multistart_prefers_converged_and_is_deterministic():
    portfolio = random_portfolio(np.random.default_rng(4), 20)
    spec = ProblemSpec(VOLUME, count_bounds=(0.45, 0.5))
    model = LogisticParams(-4.0)
    a = multistart_sqp(spec, portfolio, model, SqpConfig(seed=3))
    b = multistart_sqp(spec, portfolio, model, SqpConfig(seed=3))
    assert np.array_equal(a.delta, b.delta)
    assert len(a.info["starts"]) == 5 and a.status == "converged"
    values = [s["penalized"] for s in a.info["starts"] if s["status"] == "converged"]
    chosen = a.info["starts"][a.info["chosen_start"]]
    assert chosen["penalized"] == min(values)


def test_trace_file_columns(tmp_path):
    result = run_sqp(VACUOUS, single(), HALF4)
    result.write_trace(tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "iter,phi,kkt_residual,alpha"
    assert len(lines) == len(result.trace) + 1


def test_unreachable_band_reports_infeasible():
    # The share cannot fall to 0.5 inside the box with this mild elasticity.
    portfolio = random_portfolio(np.random.default_rng(4), 20)
    spec = ProblemSpec(VOLUME, count_bounds=(0.45, 0.5))
    result = run_sqp(spec, portfolio, LogisticParams(-1.0))
    assert not result.feasible and result.status != "converged"
    assert np.all(np.abs(result.delta) <= 0.2)


def test_linear_model_matches_single_qp(rng):
    # Expected volume under a linear model is a concave quadratic, so one
    # exact QP solve from delta = 0 gives the optimum.
    from priceopt.qp import QpSubproblem

    n = 12
    portfolio = random_portfolio(rng, n)
    alpha = rng.uniform(0.35, 0.65, size=n)
    beta = rng.uniform(-1.5, -0.5, size=n)
    model = LinearParams(alpha, beta)
    spec = ProblemSpec(VOLUME, count_bounds=(0.45, 0.5))
    P = portfolio.base
    qp = QpSubproblem(Q=np.diag(-2 * P * beta), g=-P * (alpha + beta),
                      A=np.vstack([beta / n, -beta / n]),
                      b=[0.5 - alpha.mean(), alpha.mean() - 0.45],
                      lower=portfolio.lower, upper=portfolio.upper, elastic_weight=None)
    exact = solve_qp(qp).step
    result = run_sqp(spec, portfolio, model, SqpConfig(kkt_tolerance=1e-9))
    assert result.status == "converged"
    best = objective_value(spec, portfolio, model, exact)
    assert result.objective == pytest.approx(best, rel=1e-8)
    np.testing.assert_allclose(result.delta, exact, atol=1e-5)


def test_multipliers_nonnegative_and_complementary():
    portfolio = random_portfolio(np.random.default_rng(13), 40)
    spec = ProblemSpec(VOLUME, count_bounds=(0.45, 0.5))
    result = run_sqp(spec, portfolio, LogisticParams(-4.0))
    assert result.status == "converged"
    m = result.multipliers
    assert m["h1"] >= 0 and m["h2"] >= 0
    assert np.all(m["upper"] >= 0) and np.all(m["lower"] >= 0)
    h1, h2 = result.residuals
    assert abs(m["h1"] * h1) < 1e-6 and abs(m["h2"] * h2) < 1e-6
    assert np.max(np.abs(m["upper"] * (result.delta - 0.2))) < 1e-6
    assert np.max(np.abs(m["lower"] * (-0.2 - result.delta))) < 1e-6


def test_accepted_steps_lower_the_merit():
    portfolio = random_portfolio(np.random.default_rng(17), 60)
    spec = ProblemSpec(VOLUME, count_bounds=(0.45, 0.5))
    result = run_sqp(spec, portfolio, LogisticParams(-3.0))
    steps = [row for row in result.trace if row["alpha"] > 0]
    assert steps and all(row["phi_next"] < row["phi"] for row in steps)


@pytest.mark.parametrize("seed", range(6))
def test_multistart_not_worse_than_fine_grid(seed):
    from priceopt import DeltaDomain, OracleConfig, exhaustive_search

    rng = np.random.default_rng(seed)
    n = 1 + seed % 2
    portfolio = random_portfolio(rng, n)
    model = LogisticParams(-float(rng.uniform(2.0, 8.0)))
    spec = ProblemSpec(VOLUME, count_bounds=(0.3, 0.7))
    grid = np.round(np.arange(-200, 201) / 1000.0, 12)
    oracle = exhaustive_search(spec, portfolio, model, OracleConfig(values=grid))
    result = multistart_sqp(spec, portfolio, model)
    assert result.objective >= oracle.objective - 1e-3 * abs(oracle.objective)


@pytest.mark.parametrize("objective", [VOLUME, COUNT])
def test_hessian_model_factorizes_every_iteration(objective, monkeypatch):
    import priceopt.sqp as sqp

    checked = []

    def checked_update(Q, s, y):
        new = bfgs_update(Q, s, y)
        np.linalg.cholesky(new)
        np.testing.assert_array_equal(new, new.T)
        checked.append(1)
        return new

    monkeypatch.setattr(sqp, "bfgs_update", checked_update)
    portfolio = random_portfolio(np.random.default_rng(23), 40)
    model = LogisticParams(-3.0)
    if objective == VOLUME:
        spec = ProblemSpec(VOLUME, count_bounds=(0.45, 0.5))
    else:
        base = objective_value(VACUOUS, portfolio, model, np.zeros(40))
        spec = ProblemSpec(COUNT, volume_bounds=(1.0 * base, 1.04 * base))
    result = run_sqp(spec, portfolio, model)
    assert result.status == "converged" and len(checked) == result.iterations
