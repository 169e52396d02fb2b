import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from priceopt.qp import QpSubproblem, solve_qp


def objective(qp, s):
    return 0.5 * s @ qp.Q @ s + qp.g @ s


def check_kkt(qp, sol, tol=1e-8):
    s = sol.step
    assert np.all(s >= qp.lower - tol) and np.all(s <= qp.upper + tol)
    slack = sol.slack if sol.slack is not None and sol.slack.size else np.zeros(qp.m)
    viol = qp.A @ s - slack - qp.b
    assert np.all(viol <= tol)
    grad = qp.Q @ s + qp.g + qp.A.T @ sol.row + sol.upper - sol.lower
    assert np.max(np.abs(grad), initial=0.0) < tol * max(1.0, np.abs(qp.g).max(), np.abs(qp.Q).max())
    assert np.all(sol.row >= 0) and np.all(sol.upper >= 0) and np.all(sol.lower >= 0)
    assert np.max(np.abs(sol.row * viol), initial=0.0) < 1e-10
    assert np.max(np.abs(sol.upper * (s - qp.upper)), initial=0.0) < 1e-10
    assert np.max(np.abs(sol.lower * (qp.lower - s)), initial=0.0) < 1e-10


def test_clipped_unconstrained_minimiser():
    qp = QpSubproblem(Q=np.eye(2), g=[-1.0, -1.0], A=np.zeros((0, 2)), b=[],
                      lower=-0.5, upper=0.5)
    sol = solve_qp(qp)
    np.testing.assert_allclose(sol.step, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(sol.upper, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(sol.lower, [0.0, 0.0], atol=1e-12)


def test_one_dimensional_bound():
    qp = QpSubproblem(Q=[[1.0]], g=[-1.0], A=np.zeros((0, 1)), b=[], lower=-0.5, upper=0.5)
    sol = solve_qp(qp)
    assert sol.step[0] == pytest.approx(0.5) and sol.upper[0] == pytest.approx(0.5)


def test_zero_gradient_feasible_origin():
    qp = QpSubproblem(Q=np.eye(3), g=np.zeros(3), A=np.ones((1, 3)), b=[1.0],
                      lower=-1.0, upper=1.0)
    sol = solve_qp(qp)
    np.testing.assert_allclose(sol.step, 0.0, atol=1e-14)
    assert np.all(sol.row == 0) and np.all(sol.upper == 0) and np.all(sol.lower == 0)


def test_active_row_complementarity():
    # min 0.5|s|^2 - s1 - s2 with s1 + s2 <= 1: solution (0.5, 0.5), multiplier 0.5.
    qp = QpSubproblem(Q=np.eye(2), g=[-1.0, -1.0], A=[[1.0, 1.0]], b=[1.0],
                      lower=-5.0, upper=5.0)
    sol = solve_qp(qp)
    np.testing.assert_allclose(sol.step, [0.5, 0.5], atol=1e-10)
    assert sol.row[0] == pytest.approx(0.5, abs=1e-10)
    assert not sol.relaxed
    check_kkt(qp, sol)


def test_inconsistent_rows_are_relaxed():
    # s <= -2 cannot hold inside [-1, 1]; the elastic slack absorbs the gap.
    qp = QpSubproblem(Q=np.eye(1), g=[0.0], A=[[1.0]], b=[-2.0], lower=-1.0, upper=1.0)
    sol = solve_qp(qp)
    assert sol.relaxed
    assert sol.step[0] == pytest.approx(-1.0, abs=1e-6)
    assert sol.slack[0] == pytest.approx(1.0, abs=1e-6)


def test_shape_validation():
    with pytest.raises(ValueError):
        QpSubproblem(Q=np.eye(2), g=[1.0, 1.0, 1.0], A=np.zeros((0, 3)), b=[], lower=-1, upper=1)
    with pytest.raises(ValueError):
        QpSubproblem(Q=np.eye(1), g=[1.0], A=[[1.0]], b=[1.0, 2.0], lower=-1, upper=1)
    with pytest.raises(ValueError):
        QpSubproblem(Q=np.eye(1), g=[1.0], A=np.zeros((0, 1)), b=[], lower=1, upper=-1)


def brute_force(qp):
    """Best primal-feasible point over every guess of the active set."""
    n, m = qp.n, qp.m
    best = None
    for bounds in itertools.product((None, "lo", "hi"), repeat=n):
        for rows in itertools.product((False, True), repeat=m):
            fixed = [i for i, b in enumerate(bounds) if b is not None]
            free = [i for i, b in enumerate(bounds) if b is None]
            x = np.zeros(n)
            for i in fixed:
                x[i] = qp.lower[i] if bounds[i] == "lo" else qp.upper[i]
            act = [r for r in range(m) if rows[r]]
            k = len(free)
            if k == 0:
                if act and not np.allclose(qp.A[act] @ x, qp.b[act]):
                    continue
            else:
                F = np.array(free)
                rhs_g = -(qp.g[F] + qp.Q[np.ix_(F, fixed)] @ x[fixed]) if fixed else -qp.g[F]
                Af = qp.A[np.ix_(act, F)] if act else np.zeros((0, k))
                rhs_a = (qp.b[act] - qp.A[np.ix_(act, fixed)] @ x[fixed]) if act else np.zeros(0)
                K = np.block([[qp.Q[np.ix_(F, F)], Af.T], [Af, np.zeros((len(act), len(act)))]])
                try:
                    sol = np.linalg.solve(K, np.concatenate([rhs_g, rhs_a]))
                except np.linalg.LinAlgError:
                    continue
                x[F] = sol[:k]
            if np.all(x >= qp.lower - 1e-9) and np.all(x <= qp.upper + 1e-9) and \
                    np.all(qp.A @ x <= qp.b + 1e-9):
                value = objective(qp, x)
                if best is None or value < best[0]:
                    best = (value, x)
    return best


def random_qp(seed, n, m, elastic):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    Q = M @ M.T + 0.1 * np.eye(n)
    g = rng.normal(size=n) * 3
    A = rng.normal(size=(m, n))
    # b >= 0 keeps s = 0 feasible for the plain problem.
    b = rng.uniform(0.0, 1.0, size=m) if not elastic else rng.normal(size=m)
    lower = -rng.uniform(0.1, 1.0, size=n)
    upper = rng.uniform(0.1, 1.0, size=n)
    return QpSubproblem(Q, g, A, b, lower, upper, elastic_weight=1e4 if elastic else None)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 3), st.integers(0, 2))
def test_matches_active_set_enumeration(seed, n, m):
    qp = random_qp(seed, n, m, elastic=False)
    sol = solve_qp(qp)
    best = brute_force(qp)
    assert best is not None
    assert objective(qp, sol.step) == pytest.approx(best[0], rel=1e-8, abs=1e-10)
    np.testing.assert_allclose(sol.step, best[1], atol=1e-6)
    check_kkt(qp, sol)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 30), st.integers(0, 2))
def test_elastic_solution_satisfies_kkt(seed, n, m):
    qp = random_qp(seed, n, m, elastic=True)
    sol = solve_qp(qp)
    check_kkt(qp, sol, tol=1e-7)
    # Slack multipliers: the weight minus the row multiplier is non-negative.
    assert np.all(sol.row <= 1e4 + 1e-6)
