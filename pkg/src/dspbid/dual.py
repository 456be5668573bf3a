"""Dual function, its subgradients, and the subgradient descent on it.

For campaign prices ``lam`` the dual decouples: every edge bids to maximize
``h_i(r_ik (1 - lam_k), b)``, every impression type goes to its most
profitable campaign, and the utility terms enter through their conjugates.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .instance import Plan

log = logging.getLogger(__name__)

STEP_RULES = ("constant_step_length", "inverse_sqrt", "halving_step_length")


class SolverFailure(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class DualEvaluation:
    value: float
    plan: Plan
    per_edge_profit: np.ndarray
    winner: np.ndarray  # campaign index per impression type, -1 for none
    spend: np.ndarray
    conjugate: np.ndarray

    @property
    def x_of_lambda(self):
        return self.plan.x

    @property
    def b_of_lambda(self):
        return self.plan.b


def conjugate_terms(instance, lam):
    return np.array([c.utility.conjugate(l) for c, l in zip(instance.campaigns, lam)], dtype=float)


def conjugate_subgradients(instance, lam):
    return np.array([c.utility.conjugate_subgradient(l)
                     for c, l in zip(instance.campaigns, lam)], dtype=float)


def eval_Q(instance, lam, method="auto"):
    """Evaluate ``Q(lam)`` together with its maximizing plan."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (instance.n_campaigns,):
        raise ValueError("lam must have one entry per campaign")
    z = instance.revenue * (1.0 - lam[instance.edge_campaign])
    bids, hval, r = instance.optimal_bids(z, method=method)
    profit = hval * instance.edge_supply
    best = instance.per_type_argmax(profit)
    x = np.zeros(instance.n_edges)
    chosen = best[best >= 0]
    chosen = chosen[profit[chosen] > 0]
    x[chosen] = 1.0
    winner = np.full(instance.n_types, -1)
    winner[best >= 0] = instance.edge_campaign[best[best >= 0]]
    spend = np.bincount(instance.edge_campaign,
                        weights=instance.revenue * instance.edge_supply * x * r,
                        minlength=instance.n_campaigns)
    conj = conjugate_terms(instance, lam)
    value = float(profit[chosen].sum() + conj.sum())
    return DualEvaluation(value, Plan(x, bids), profit, winner, spend, conj)


def subgradient(instance, lam, evaluation=None):
    """``g = p'(lam) - v(x(lam), b(lam))``."""
    ev = evaluation if evaluation is not None else eval_Q(instance, lam)
    return conjugate_subgradients(instance, lam) - ev.spend


def psi(instance, lam, i):
    """Dual contribution of impression type ``i`` alone."""
    lam = np.asarray(lam, dtype=float)
    idx = instance.type_edges[i]
    if idx.size == 0:
        return 0.0
    land = instance.landscape(i)
    z = instance.revenue[idx] * (1.0 - lam[instance.edge_campaign[idx]])
    _, vals = land.optimal_bids(z, instance.max_bid[i])
    return max(0.0, float(np.max(vals)) * instance.supply[i])


@dataclass
class SolveConfig:
    max_iters: int = 2000
    step_rule: str = "halving_step_length"
    step_scale: float = 0.1
    tol_rel: float = 1e-6
    seed: int = 0
    window: int = 200
    patience: int = 30
    average: bool = False

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"step_rule must be one of {STEP_RULES}")
        if not self.step_scale > 0 or not self.tol_rel > 0:
            raise ValueError("step_scale and tol_rel must be positive")


@dataclass
class SolveResult:
    lambda_best: np.ndarray
    q_best: float
    history: list = field(default_factory=list)  # (iter, Q, |g|, step)
    iterations_used: int = 0
    lambda_avg: np.ndarray | None = None


def minimize_Q(instance, config=None, lam0=None):
    """Subgradient descent on ``Q`` from ``lam0`` (zero by default).

    Step rules: ``constant_step_length`` moves ``step_scale`` in lambda per
    iteration, ``inverse_sqrt`` uses ``eta_t = step_scale / sqrt(t)``, and
    ``halving_step_length`` moves ``step_scale`` per iteration but halves the
    length after ``patience`` iterations without a new best value. The best
    iterate is returned; the run stops after ``max_iters`` or once the best
    value has improved by less than ``tol_rel`` over ``window`` iterations.
    """
    cfg = config or SolveConfig()
    lam = np.zeros(instance.n_campaigns) if lam0 is None else np.array(lam0, dtype=float)
    history = []
    best_lam, best_q = lam.copy(), math.inf
    best_trace = []
    length = cfg.step_scale
    since_best = 0
    lam_sum = np.zeros_like(lam)
    weight = 0.0
    t = 0
    while True:
        ev = eval_Q(instance, lam)
        g = subgradient(instance, lam, ev)
        gnorm = float(np.linalg.norm(g))
        if not (math.isfinite(ev.value) and np.all(np.isfinite(g))):
            raise SolverFailure(f"non-finite dual value or subgradient at iteration {t}", history)
        # only gains above tol_rel count as progress for the halving rule
        if best_q - ev.value > cfg.tol_rel * max(1.0, abs(ev.value)):
            since_best = 0
        else:
            since_best += 1
        if ev.value < best_q:
            best_q, best_lam = ev.value, lam.copy()
        best_trace.append(best_q)
        if t >= cfg.max_iters or gnorm == 0.0:
            history.append((t, ev.value, gnorm, 0.0))
            break
        if len(best_trace) > cfg.window:
            old = best_trace[-cfg.window - 1]
            if old - best_q <= cfg.tol_rel * max(1.0, abs(old)):
                history.append((t, ev.value, gnorm, 0.0))
                break
        t += 1
        if cfg.step_rule == "inverse_sqrt":
            eta = cfg.step_scale / math.sqrt(t)
        else:
            if cfg.step_rule == "halving_step_length" and since_best >= cfg.patience:
                length *= 0.5
                since_best = 0
            eta = length / gnorm
        history.append((t - 1, ev.value, gnorm, eta))
        lam = lam - eta * g
        lam_sum += eta * lam
        weight += eta
    avg = lam_sum / weight if weight > 0 else None
    if cfg.average and avg is not None:
        q_avg = eval_Q(instance, avg).value
        history.append((t, q_avg, math.nan, 0.0))
        if q_avg < best_q:
            best_q, best_lam = q_avg, avg.copy()
    log.debug("dual solve: %d iterations, Q=%.10g", t, best_q)
    return SolveResult(best_lam, best_q, history, t, avg)
