"""Dense convex QP with simple bounds and a few general rows.

Solves::

    min  0.5 s'Qs + g's
    s.t. lower <= s <= upper
         A s <= b

In elastic mode every general row gets a slack ``t >= 0`` (``A s - t <= b``)
charged ``weight * sum(t)`` in the objective, so the subproblem is always
feasible. A primal-dual active-set iteration is tried first; if it fails to
settle, a primal active-set method started from a feasible point takes over.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

SLACK_CURVATURE = 1e-8


@dataclass
class QpSubproblem:
    Q: np.ndarray
    g: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    elastic_weight: Optional[float] = 1e4

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        n = self.g.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if self.Q.shape != (n, n):
            raise ValueError(f"Q must be {n}x{n}, got {self.Q.shape}")
        if self.A.shape[0] != self.b.size:
            raise ValueError("A and b disagree on the number of rows")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")

    @property
    def n(self) -> int:
        return self.g.size

    @property
    def m(self) -> int:
        return self.b.size


@dataclass
class QpSolution:
    """Step and multipliers: ``row`` for the general rows, ``upper`` / ``lower``
    for the bounds. All multipliers are non-negative."""

    step: np.ndarray
    row: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    slack: np.ndarray
    relaxed: bool
    method: str
    iterations: int


class _Extended:
    """The QP in variables ``x = (s, t)``: bounds ``lo <= x <= hi``, rows ``G x <= e``."""

    def __init__(self, qp: QpSubproblem):
        n, m = qp.n, qp.m
        self.n, self.m = n, m
        self.elastic = qp.elastic_weight is not None and m > 0
        if self.elastic:
            size = n + m
            self.H = np.zeros((size, size))
            self.H[:n, :n] = qp.Q
            self.H[n:, n:] = np.eye(m) * SLACK_CURVATURE
            self.c = np.concatenate([qp.g, np.full(m, float(qp.elastic_weight))])
            self.G = np.hstack([qp.A, -np.eye(m)])
            self.lo = np.concatenate([qp.lower, np.zeros(m)])
            self.hi = np.concatenate([qp.upper, np.full(m, np.inf)])
        else:
            self.H, self.c, self.G = qp.Q, qp.g, qp.A
            self.lo, self.hi = qp.lower, qp.upper
        self.e = qp.b
        scale = max(1.0, float(np.max(np.abs(qp.Q), initial=0.0)),
                    float(np.max(np.abs(qp.g), initial=0.0)))
        self.tol = 1e-11 * scale

    def feasible_start(self, guess=None) -> np.ndarray:
        """``guess`` (or zero) clipped to the bounds, slacks set to the row excess."""
        s = np.zeros(self.n) if guess is None else guess[:self.n]
        x = np.clip(s, self.lo[:self.n], self.hi[:self.n])
        if self.elastic:
            x = np.concatenate([x, np.maximum(0.0, self.G[:, :self.n] @ x - self.e)])
        return x

    def solve_reduced(self, fixed_mask, x_fixed, rows, rhs_rows):
        """Minimise over free coordinates with ``rows`` held as equalities."""
        free = ~fixed_mask
        H, G = self.H, self.G[rows]
        x = np.where(fixed_mask, x_fixed, 0.0)
        nf, nw = int(free.sum()), len(rows)
        K = np.zeros((nf + nw, nf + nw))
        K[:nf, :nf] = H[np.ix_(free, free)]
        K[:nf, nf:] = G[:, free].T
        K[nf:, :nf] = G[:, free]
        rhs = np.concatenate([
            -self.c[free] - H[np.ix_(free, fixed_mask)] @ x[fixed_mask],
            rhs_rows - G[:, fixed_mask] @ x[fixed_mask],
        ])
        sol = np.linalg.solve(K, rhs)
        x[free] = sol[:nf]
        return x, sol[nf:]

    def bound_duals(self, x, rows, lam):
        """Signed bound multiplier ``nu = -(Hx + c + G_W' lam)``; upper if > 0."""
        grad = self.H @ x + self.c
        if len(rows):
            grad = grad + self.G[rows].T @ lam
        return -grad

    def kkt_ok(self, x, lam_full, nu, at_lo, at_hi) -> bool:
        tol = self.tol
        if np.any(x < self.lo - tol) or np.any(x > self.hi + tol):
            return False
        if self.m and np.any(self.G @ x - self.e > tol * (1 + np.abs(self.e))):
            return False
        return bool(np.all(nu[at_hi] >= -tol) and np.all(nu[at_lo] <= tol)
                    and np.all(lam_full >= -tol))


def _pdas(ext: _Extended, max_iter: int):
    size = ext.lo.size
    at_lo = np.zeros(size, dtype=bool)
    if ext.elastic:
        at_lo[ext.n:] = True
    at_hi = np.zeros(size, dtype=bool)
    active_rows = np.zeros(ext.m, dtype=bool)
    seen = set()
    last = None
    for it in range(1, max_iter + 1):
        # A row cannot be held as an equality with all its variables fixed;
        # release them and let the next update re-fix the ones that need it.
        if ext.m:
            stuck = active_rows & ~np.any(ext.G[:, ~(at_lo | at_hi)] != 0, axis=1)
            if stuck.any():
                release = np.any(ext.G[stuck] != 0, axis=0)
                release[ext.n:] = False
                at_lo &= ~release
                at_hi &= ~release
        fixed = at_lo | at_hi
        x_fixed = np.where(at_lo, ext.lo, np.where(at_hi, ext.hi, 0.0))
        rows = np.flatnonzero(active_rows)
        try:
            x, lam = ext.solve_reduced(fixed, x_fixed, rows, ext.e[rows])
        except np.linalg.LinAlgError:
            return None, last
        last = x
        nu = np.where(fixed, ext.bound_duals(x, rows, lam), 0.0)
        lam_full = np.zeros(ext.m)
        lam_full[rows] = lam
        with np.errstate(invalid="ignore"):
            new_hi = nu + (x - ext.hi) > 0
            new_lo = -nu + (ext.lo - x) > 0
        new_rows = lam_full + (ext.G @ x - ext.e) > 0 if ext.m else active_rows
        new_hi &= np.isfinite(ext.hi)
        new_lo &= np.isfinite(ext.lo) & ~new_hi
        if (np.array_equal(new_hi, at_hi) and np.array_equal(new_lo, at_lo)
                and np.array_equal(new_rows, active_rows)):
            if ext.kkt_ok(x, lam_full, nu, at_lo, at_hi):
                return (x, lam_full, nu, it), last
            return None, last
        key = (new_hi.tobytes(), new_lo.tobytes(), np.asarray(new_rows).tobytes())
        if key in seen:
            return None, last
        seen.add(key)
        at_hi, at_lo, active_rows = new_hi, new_lo, np.asarray(new_rows, dtype=bool)
    return None, last


def _primal_active_set(ext: _Extended, max_iter: int, guess=None):
    """Primal active-set method from a feasible point; bounds and rows tracked separately."""
    x = ext.feasible_start(guess)
    tol = ext.tol
    at_lo = np.isfinite(ext.lo) & (x <= ext.lo)
    at_hi = np.isfinite(ext.hi) & (x >= ext.hi) & ~at_lo
    active_rows: list[int] = []
    for it in range(1, max_iter + 1):
        fixed = at_lo | at_hi
        rows = np.array(active_rows, dtype=int)
        p, lam = _eqp_step(ext, x, fixed, rows)
        if np.max(np.abs(p)) <= 1e-9 * (1.0 + np.max(np.abs(x))):
            nu = np.where(fixed, ext.bound_duals(x, rows, lam), 0.0)
            dual = np.concatenate([np.where(at_hi, nu, np.inf), np.where(at_lo, -nu, np.inf),
                                   lam if rows.size else np.empty(0)])
            worst = int(np.argmin(dual)) if dual.size else 0
            if dual.size == 0 or dual[worst] >= -tol:
                lam_full = np.zeros(ext.m)
                lam_full[rows] = lam
                return x, lam_full, nu, it
            size = x.size
            if worst < size:
                at_hi[worst] = False
            elif worst < 2 * size:
                at_lo[worst - size] = False
            else:
                active_rows.pop(worst - 2 * size)
            continue
        alpha, block = 1.0, None
        free = ~fixed
        with np.errstate(divide="ignore", invalid="ignore"):
            to_hi = np.where(free & (p > 0), (ext.hi - x) / p, np.inf)
            to_lo = np.where(free & (p < 0), (ext.lo - x) / p, np.inf)
        for kind, ratios in (("hi", to_hi), ("lo", to_lo)):
            i = int(np.argmin(ratios))
            if ratios[i] < alpha:
                alpha, block = max(float(ratios[i]), 0.0), (kind, i)
        if ext.m:
            gp = ext.G @ p
            slack = ext.e - ext.G @ x
            for j in range(ext.m):
                if j not in active_rows and gp[j] > 0:
                    a = max(slack[j], 0.0) / gp[j]
                    if a < alpha:
                        alpha, block = a, ("row", j)
        x = x + alpha * p
        if block is not None:
            kind, i = block
            if kind == "hi":
                x[i], at_hi[i] = ext.hi[i], True
            elif kind == "lo":
                x[i], at_lo[i] = ext.lo[i], True
            else:
                active_rows.append(i)
    raise RuntimeError("QP active-set iteration limit reached")


def _eqp_step(ext: _Extended, x, fixed, rows):
    free = ~fixed
    nf, nw = int(free.sum()), rows.size
    G = ext.G[rows]
    K = np.zeros((nf + nw, nf + nw))
    K[:nf, :nf] = ext.H[np.ix_(free, free)]
    K[:nf, nf:] = G[:, free].T
    K[nf:, :nf] = G[:, free]
    rhs = np.concatenate([-(ext.H @ x + ext.c)[free], np.zeros(nw)])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    p = np.zeros_like(x)
    p[free] = sol[:nf]
    return p, sol[nf:]


def solve_qp(qp: QpSubproblem, max_iter: Optional[int] = None) -> QpSolution:
    """Exact solution of the convex subproblem with its multipliers."""
    ext = _Extended(qp)
    size = ext.lo.size + ext.m
    out, last = _pdas(ext, max_iter or max(50, size))
    method = "pdas"
    if out is None:
        if last is not None and not np.all(np.isfinite(last)):
            last = None
        out = _primal_active_set(ext, max_iter or 20 * size + 100, last if ext.elastic else None)
        method = "active_set"
    x, lam, nu, iterations = out
    n = qp.n
    slack = x[n:] if ext.elastic else np.zeros(qp.m)
    return QpSolution(
        step=x[:n].copy(),
        row=np.maximum(lam, 0.0),
        upper=np.maximum(nu[:n], 0.0),
        lower=np.maximum(-nu[:n], 0.0),
        slack=slack.copy(),
        relaxed=bool(np.any(slack > ext.tol)),
        method=method,
        iterations=iterations,
    )
