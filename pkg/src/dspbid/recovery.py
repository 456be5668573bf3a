"""Turn dual prices into a feasible plan.

Bids are fixed at the per-edge optimum for the dual prices; with bids fixed
the planning problem is concave in the allocation ``x`` and is solved as an
LP, or by Frank-Wolfe when some campaign has a quadratic spend target.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import simplex
from .dual import SolveConfig, minimize_Q
from .instance import Plan, objective
from .simplex import LinearProgram, solve_lp
from .utility import QuadraticTarget, SpendRange

log = logging.getLogger(__name__)

RECOVERY_TOL = 1e-7


@dataclass
class RecoveryConfig:
    max_iters: int = 5000
    gap_tol: float = 1e-6
    away_steps: bool = True


@dataclass
class RecoveryResult:
    plan: Plan | None
    objective_value: float
    status: str
    iterations: int = 0
    fw_gap: float = 0.0
    message: str = ""
    suggested_alpha: dict = field(default_factory=dict)


def fix_bids(instance, lam):
    lam = np.asarray(lam, dtype=float)
    if not np.all(np.isfinite(lam)):
        raise ValueError("lam must be finite")
    z = instance.revenue * (1.0 - lam[instance.edge_campaign])
    bids, _, _ = instance.optimal_bids(z)
    return bids


def spend_coefficients(instance, bids):
    """Per-edge spend per unit of ``x`` and profit per unit of ``x``."""
    rho, beta = instance.edge_curves(bids)
    spend = instance.revenue * instance.edge_supply * rho
    profit = (instance.revenue - beta) * instance.edge_supply * rho
    return spend, profit


def build_allocation_problem(instance, bids):
    """Allocation problem for fixed bids as a :class:`LinearProgram`.

    Rows: one ``sum_k x_ik <= 1`` per impression type that has edges, one
    budget row per campaign, and one spend floor row per SpendRange campaign.
    QuadraticTarget campaigns contribute a concave term in ``quadratic``.
    """
    n = instance.n_edges
    spend, profit = spend_coefficients(instance, bids)
    rows, senses, rhs = [], [], []
    for idx in instance.type_edges:
        if idx.size:
            row = np.zeros(n)
            row[idx] = 1.0
            rows.append(row)
            senses.append("<=")
            rhs.append(1.0)
    quad = []
    for k, camp in enumerate(instance.campaigns):
        idx = instance.campaign_edges[k]
        coef = np.zeros(n)
        coef[idx] = spend[idx]
        rows.append(coef)
        senses.append("<=")
        rhs.append(camp.budget)
        util = camp.utility
        if isinstance(util, SpendRange):
            rows.append(coef.copy())
            senses.append(">=")
            rhs.append(util.floor)
        elif isinstance(util, QuadraticTarget) and util.tau > 0:
            quad.append((coef, camp.budget, util.tau))
    A = np.array(rows).reshape(len(rows), n)
    return LinearProgram(profit, A, senses, np.array(rhs, dtype=float),
                         np.zeros(n), np.ones(n), quad)


def suggest_alpha(instance, bids):
    """Largest spend floor fraction each SpendRange campaign can reach."""
    spend, _ = spend_coefficients(instance, bids)
    reach = np.bincount(instance.edge_campaign, weights=spend, minlength=instance.n_campaigns)
    out = {}
    for k, camp in enumerate(instance.campaigns):
        if isinstance(camp.utility, SpendRange) and camp.budget > 0:
            out[camp.id] = float(min(camp.utility.alpha_spend, reach[k] / camp.budget))
    return out


def _gradient(lp, x):
    grad = lp.c.copy()
    for coef, target, tau in lp.quadratic:
        grad -= tau * (coef @ x - target) * coef
    return grad


def _curvature(lp, d):
    return sum(tau * (coef @ d) ** 2 for coef, _, tau in lp.quadratic)


def frank_wolfe(lp, config=None):
    """Maximize ``lp.value`` over the LP polytope with away-step Frank-Wolfe.

    Returns ``(x, status, iterations, gap, values)``; ``values`` is the
    objective after every iteration.
    """
    cfg = config or RecoveryConfig()
    start = solve_lp(lp)
    if start.status != simplex.OPTIMAL:
        return None, start.status, 0, math.inf, []
    x = start.x
    vertices = [x.copy()]
    weights = [1.0]
    values = [lp.value(x)]
    gap = math.inf
    for it in range(1, cfg.max_iters + 1):
        grad = _gradient(lp, x)
        sub = solve_lp(LinearProgram(grad, lp.A, lp.senses, lp.rhs, lp.lower, lp.upper))
        if sub.status != simplex.OPTIMAL:
            return x, sub.status, it, gap, values
        s = sub.x
        gap = float(grad @ (s - x))
        if gap <= cfg.gap_tol * max(1.0, abs(values[-1])):
            return x, simplex.OPTIMAL, it - 1, max(gap, 0.0), values
        d = s - x
        gmax = 1.0
        away = None
        if cfg.away_steps and len(vertices) > 1:
            scores = [grad @ v for v in vertices]
            a = int(np.argmin(scores))
            away_gap = float(grad @ (x - vertices[a]))
            if away_gap > gap and weights[a] < 1.0:
                away = a
                d = x - vertices[a]
                gmax = weights[a] / (1.0 - weights[a])
        slope = float(grad @ d)
        curv = _curvature(lp, d)
        step = gmax if curv <= 0 else min(gmax, slope / curv)
        step = max(step, 0.0)
        x = x + step * d
        if away is None:
            weights = [w * (1.0 - step) for w in weights]
            for j, v in enumerate(vertices):
                if np.array_equal(v, s):
                    weights[j] += step
                    break
            else:
                vertices.append(s.copy())
                weights.append(step)
        else:
            weights = [w * (1.0 + step) for w in weights]
            weights[away] -= step
        keep = [j for j, w in enumerate(weights) if w > 1e-14]
        vertices = [vertices[j] for j in keep]
        weights = [weights[j] for j in keep]
        values.append(lp.value(x))
    return x, simplex.ITERATION_LIMIT, cfg.max_iters, gap, values


def solve_allocation(instance, bids, config=None):
    lp = build_allocation_problem(instance, bids)
    if lp.is_quadratic:
        x, status, iters, gap, _ = frank_wolfe(lp, config)
    else:
        res = solve_lp(lp)
        x, status, iters, gap = res.x, res.status, res.iterations, 0.0
    if status == simplex.INFEASIBLE or x is None:
        alpha = suggest_alpha(instance, bids)
        msg = "allocation problem is infeasible"
        if alpha:
            msg += "; reachable spend floor fractions: " + ", ".join(
                f"{k}={v:.4g}" for k, v in alpha.items())
        return RecoveryResult(None, -math.inf, simplex.INFEASIBLE, iters, math.inf, msg, alpha)
    plan = Plan(np.clip(x, 0.0, 1.0), np.asarray(bids, dtype=float).copy())
    value = objective(instance, plan, tol=RECOVERY_TOL)
    return RecoveryResult(plan, value, status, iters, gap)


def solve_quadratic_recovery(instance, bids, config=None):
    """Frank-Wolfe recovery; every utility must be BudgetCap or QuadraticTarget."""
    for camp in instance.campaigns:
        if isinstance(camp.utility, SpendRange):
            raise ValueError("solve_quadratic_recovery does not handle SpendRange utilities")
    lp = build_allocation_problem(instance, bids)
    x, status, iters, gap, _ = frank_wolfe(lp, config)
    if x is None:
        return RecoveryResult(None, -math.inf, status, iters, math.inf,
                              "allocation problem is infeasible")
    plan = Plan(np.clip(x, 0.0, 1.0), np.asarray(bids, dtype=float).copy())
    return RecoveryResult(plan, objective(instance, plan, tol=RECOVERY_TOL), status, iters, gap)


def recover(instance, lam, config=None):
    """Fix bids from ``lam`` and solve the allocation problem."""
    return solve_allocation(instance, fix_bids(instance, lam), config)


@dataclass
class TwoPhaseResult:
    lam: np.ndarray
    q_best: float
    recovery: RecoveryResult
    history: list

    @property
    def plan(self):
        return self.recovery.plan

    @property
    def f_recovered(self):
        return self.recovery.objective_value

    @property
    def status(self):
        return self.recovery.status

    @property
    def gap(self):
        return self.q_best - self.f_recovered

    def summary(self):
        return {"Q_best": self.q_best, "F_recovered": self.f_recovered,
                "gap": self.gap, "status": self.status}


def two_phase(instance, solve_config=None, recovery_config=None, lam0=None):
    """Dual descent followed by recovery at the best dual prices."""
    sol = minimize_Q(instance, solve_config or SolveConfig(), lam0)
    rec = recover(instance, sol.lambda_best, recovery_config)
    log.debug("two-phase: Q=%.10g F=%.10g status=%s", sol.q_best, rec.objective_value, rec.status)
    return TwoPhaseResult(sol.lambda_best, sol.q_best, rec, sol.history)
