"""Dense bounded-variable primal simplex for small linear programs.

Solves ``max c @ x`` subject to row constraints with senses ``<=``, ``>=``
or ``=`` and finite lower / possibly infinite upper variable bounds.
Nonbasic variables sit at either bound, so upper bounds never become rows.
Entering and leaving choices follow Bland's rule; feasibility comes from a
phase 1 on artificial variables.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    senses: list
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    # concave quadratic terms -(tau/2)(coef @ x - target)^2, each a
    # (coef, target, tau) triple; plain LPs leave this empty
    quadratic: list = field(default_factory=list)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.senses = list(self.senses)
        if not (self.A.shape[0] == self.rhs.size == len(self.senses)):
            raise ValueError("row data have inconsistent lengths")
        if not (self.lower.size == self.upper.size == n):
            raise ValueError("bounds must match the number of variables")
        if not set(self.senses) <= {"<=", ">=", "="}:
            raise ValueError("senses must be '<=', '>=' or '='")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.c))
                and np.all(np.isfinite(self.rhs)) and np.all(np.isfinite(self.lower))):
            raise ValueError("LP data must be finite (upper bounds may be inf)")

    @property
    def n_vars(self):
        return self.c.size

    @property
    def n_rows(self):
        return self.rhs.size

    @property
    def is_quadratic(self):
        return any(tau > 0 for _, _, tau in self.quadratic)

    def value(self, x):
        val = float(self.c @ x)
        for coef, target, tau in self.quadratic:
            val -= 0.5 * tau * (coef @ x - target) ** 2
        return val

    def max_violation(self, x):
        x = np.asarray(x, dtype=float)
        ax = self.A @ x
        viol = [0.0]
        for s, lhs, r in zip(self.senses, ax, self.rhs):
            if s == "<=":
                viol.append(lhs - r)
            elif s == ">=":
                viol.append(r - lhs)
            else:
                viol.append(abs(lhs - r))
        viol.append(float(np.max(self.lower - x, initial=0.0)))
        viol.append(float(np.max(x - self.upper, initial=0.0)))
        return max(viol)


@dataclass
class LPResult:
    x: np.ndarray | None
    value: float
    status: str
    iterations: int = 0


class _Tableau:
    """Bounded simplex state on ``T x = beta`` with ``0 <= x <= u``."""

    def __init__(self, T, beta, u, basis, tol):
        self.T = T
        self.xb = beta
        self.u = u
        self.basis = basis
        self.nonbasic_upper = np.zeros(T.shape[1], dtype=bool)
        self.is_basic = np.zeros(T.shape[1], dtype=bool)
        self.is_basic[basis] = True
        self.tol = tol

    def values(self):
        x = np.where(self.nonbasic_upper, self.u, 0.0)
        x[self.basis] = self.xb
        return x

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.is_basic[self.basis[r]] = False
        self.basis[r] = j
        self.is_basic[j] = True
        self.nonbasic_upper[j] = False

    def run(self, cost, allowed, max_iter):
        """Maximize ``cost @ x``; returns (status, iterations)."""
        tol = self.tol
        ctol = tol * max(1.0, float(np.max(np.abs(cost), initial=0.0)))
        for it in range(max_iter):
            d = cost - cost[self.basis] @ self.T
            up = (d > ctol) & ~self.nonbasic_upper
            down = (d < -ctol) & self.nonbasic_upper
            cand = np.flatnonzero((up | down) & allowed & ~self.is_basic)
            if cand.size == 0:
                return OPTIMAL, it
            j = cand[0]
            sigma = 1.0 if up[j] else -1.0
            move = sigma * self.T[:, j]  # basic values change by -t * move
            limits = np.full(move.size, np.inf)
            dec = move > tol
            inc = move < -tol
            limits[dec] = np.maximum(self.xb[dec], 0.0) / move[dec]
            ub = self.u[self.basis]
            fin = inc & np.isfinite(ub)
            limits[fin] = np.maximum(ub[fin] - self.xb[fin], 0.0) / -move[fin]
            t_row = limits.min() if limits.size else np.inf
            t_flip = self.u[j]
            if t_flip <= t_row:
                if not np.isfinite(t_flip):
                    return UNBOUNDED, it
                self.xb -= t_flip * move
                self.nonbasic_upper[j] = not self.nonbasic_upper[j]
                continue
            ties = np.flatnonzero(limits <= t_row + tol * max(1.0, t_row))
            r = ties[np.argmin(self.basis[ties])]
            leave = self.basis[r]
            to_upper = bool(inc[r])
            enter_val = t_row if sigma > 0 else self.u[j] - t_row
            self.xb -= t_row * move
            self.pivot(r, j)
            self.xb[r] = enter_val
            self.nonbasic_upper[leave] = to_upper
        return ITERATION_LIMIT, max_iter


def solve_lp(lp, max_iter=None, tol=1e-9):
    """Solve ``lp`` (linear part only); returns an :class:`LPResult`."""
    m, n = lp.n_rows, lp.n_vars
    lo = lp.lower
    u = lp.upper - lo
    if np.any(u < -tol):
        return LPResult(None, -np.inf, INFEASIBLE)
    u = np.maximum(u, 0.0)
    rhs = lp.rhs - lp.A @ lo
    sign = np.array([{"<=": 1.0, ">=": -1.0, "=": 0.0}[s] for s in lp.senses])
    ineq = np.flatnonzero(sign != 0)
    n_slack = ineq.size
    slack = np.zeros((m, n_slack))
    slack[ineq, np.arange(n_slack)] = sign[ineq]
    A = np.hstack([lp.A, slack])
    flip = rhs < 0
    A[flip] *= -1.0
    rhs = np.where(flip, -rhs, rhs)
    # rows whose slack already has coefficient +1 start with the slack basic
    basis = np.full(m, -1)
    for col, row in enumerate(ineq):
        if A[row, n + col] > 0:
            basis[row] = n + col
    need_art = np.flatnonzero(basis < 0)
    n_art = need_art.size
    art = np.zeros((m, n_art))
    art[need_art, np.arange(n_art)] = 1.0
    N = n + n_slack + n_art
    basis[need_art] = n + n_slack + np.arange(n_art)
    T = np.hstack([A, art])
    ub = np.r_[u, np.full(n_slack + n_art, np.inf)]
    tab = _Tableau(T, rhs.astype(float), ub, basis, tol)
    is_art = np.zeros(N, dtype=bool)
    is_art[n + n_slack:] = True
    max_iter = max_iter or 50 * (m + N) + 1000
    iters = 0
    if n_art:
        status, it = tab.run(-is_art.astype(float), np.ones(N, dtype=bool), max_iter)
        iters += it
        if status == ITERATION_LIMIT:
            return LPResult(None, -np.inf, ITERATION_LIMIT, iters)
        infeas = tab.values()[is_art].sum()
        if infeas > tol * max(1.0, float(np.max(np.abs(rhs), initial=0.0))) * 10:
            return LPResult(None, -np.inf, INFEASIBLE, iters)
        # drive remaining artificials out of the basis
        for r in range(m):
            if is_art[tab.basis[r]]:
                row = np.abs(tab.T[r]) > 1e-7
                row &= ~is_art & ~tab.is_basic
                cols = np.flatnonzero(row)
                if cols.size:
                    j = cols[0]
                    val = tab.u[j] if tab.nonbasic_upper[j] else 0.0
                    tab.pivot(r, j)
                    tab.xb[r] = val
                else:
                    tab.xb[r] = 0.0  # redundant row
        tab.u[is_art] = 0.0
    cost = np.r_[lp.c, np.zeros(n_slack + n_art)]
    status, it = tab.run(cost, ~is_art, max_iter - iters)
    iters += it
    if status != OPTIMAL:
        return LPResult(None, -np.inf if status == ITERATION_LIMIT else np.inf, status, iters)
    x = np.clip(tab.values()[:n], 0.0, u) + lo
    return LPResult(x, float(lp.c @ x), OPTIMAL, iters)
