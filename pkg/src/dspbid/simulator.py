"""Replay of an impression stream under a planned or a greedy bidding policy.

Replications are simulated side by side: the event loop walks the stream
positions once and every replication advances with numpy arrays of shape
``(R,)``. Each replication owns its generators, so results do not depend on
how many replications run together, and both policies see the same streams
and the same uniforms (common random numbers).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dual import SolveConfig, SolverFailure
from .instance import ConfigurationError
from .recovery import two_phase

log = logging.getLogger(__name__)

# sub-stream ids for np.random.default_rng([seed, stream, replication])
STREAM_EVENTS = 1
STREAM_DRAWS = 2

POLICIES = ("two_phase", "greedy")


@dataclass(frozen=True)
class ImpressionEvent:
    seq: int
    impression_id: str
    market_price: float
    auction: str = "second_price"
    alpha: float = 1.0


@dataclass
class SimConfig:
    seed: int = 0
    replications: int = 100
    budget_fraction: float = 1.0
    policy: str = "two_phase"
    resolve_every: int | None = None
    test_ctr: object = None  # per-edge array or {(impression_id, campaign_id): ctr}

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if not self.budget_fraction > 0:
            raise ValueError("budget_fraction must be positive")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        if self.resolve_every is not None and self.resolve_every < 1:
            raise ValueError("resolve_every must be a positive integer")


@dataclass
class SimReport:
    policy: str
    budgets: np.ndarray
    profit: np.ndarray
    revenue: np.ndarray
    payments: np.ndarray
    spend: np.ndarray  # (R, K)
    clicks: np.ndarray
    wins: np.ndarray
    bids: np.ndarray
    resolves: int = 0
    campaign_ids: list = field(default_factory=list)

    @property
    def replications(self):
        return self.profit.size

    @property
    def budget_utilization(self):
        total = self.budgets.sum()
        if total <= 0:
            return np.zeros(self.replications)
        return self.spend.sum(axis=1) / total

    @property
    def mean_profit(self):
        return float(self.profit.mean())

    @property
    def mean_bu(self):
        return float(self.budget_utilization.mean())

    def aggregate(self):
        sem = self.profit.std(ddof=1) / math.sqrt(self.replications) if self.replications > 1 else 0.0
        return {"policy": self.policy, "replications": self.replications,
                "profit": self.mean_profit, "profit_sem": float(sem),
                "budget_utilization": self.mean_bu,
                "clicks": float(self.clicks.mean()), "wins": float(self.wins.mean()),
                "spend": self.spend.mean(axis=0).tolist(), "resolves": self.resolves}

    def rows(self):
        """One dict per replication followed by a ``mean`` row."""
        bu = self.budget_utilization
        out = []
        for r in range(self.replications):
            row = {"replication": r, "profit": self.profit[r], "revenue": self.revenue[r],
                   "payments": self.payments[r], "budget_utilization": bu[r],
                   "clicks": int(self.clicks[r]), "wins": int(self.wins[r])}
            for cid, s in zip(self.campaign_ids, self.spend[r]):
                row[f"spend_{cid}"] = s
            out.append(row)
        mean = {"replication": "mean", "profit": self.mean_profit,
                "revenue": float(self.revenue.mean()), "payments": float(self.payments.mean()),
                "budget_utilization": self.mean_bu, "clicks": float(self.clicks.mean()),
                "wins": float(self.wins.mean())}
        for cid, s in zip(self.campaign_ids, self.spend.mean(axis=0)):
            mean[f"spend_{cid}"] = s
        out.append(mean)
        return out


@dataclass
class _Streams:
    """Stream positions for every replication: type index and market price, (R, E)."""
    types: np.ndarray
    market: np.ndarray

    @property
    def length(self):
        return self.types.shape[1]


def _event_counts(instance):
    return np.rint(instance.supply).astype(int)


def _draw_stream(instance, rng):
    counts = _event_counts(instance)
    types = np.repeat(np.arange(instance.n_types), counts)
    market = np.empty(types.size)
    start = 0
    for i, n in enumerate(counts):
        if n:
            market[start:start + n] = instance.landscape(i).sample_market_prices(rng, n)
        start += n
    order = rng.permutation(types.size)
    return types[order], market[order]


def generate_stream(instance, seed, replication=0):
    """Synthetic impression stream: ``round(s_i)`` events per type, shuffled."""
    instance.require_consistent()
    rng = np.random.default_rng([seed, STREAM_EVENTS, replication])
    types, market = _draw_stream(instance, rng)
    events = []
    for seq, (i, p) in enumerate(zip(types, market)):
        land = instance.landscape(i)
        events.append(ImpressionEvent(seq, instance.impression_types[i].id, float(p),
                                      land.payment_rule, land.alpha))
    return events


def _streams(instance, config, stream):
    R = config.replications
    if stream is None:
        pairs = [_draw_stream(instance, np.random.default_rng([config.seed, STREAM_EVENTS, r]))
                 for r in range(R)]
        types = np.array([p[0] for p in pairs], dtype=int).reshape(R, -1)
        market = np.array([p[1] for p in pairs], dtype=float).reshape(R, -1)
        return _Streams(types, market)
    index = {t.id: n for n, t in enumerate(instance.impression_types)}
    try:
        types = np.array([index[e.impression_id] for e in stream], dtype=int)
    except KeyError as exc:
        raise ConfigurationError(f"stream refers to unknown impression type {exc}") from None
    seqs = [e.seq for e in stream]
    if any(b <= a for a, b in zip(seqs, seqs[1:])):
        raise ConfigurationError("stream seq values must be strictly increasing")
    market = np.array([e.market_price for e in stream], dtype=float)
    return _Streams(np.tile(types, (R, 1)), np.tile(market, (R, 1)))


def _uniforms(config, length):
    sel = np.empty((config.replications, length))
    clk = np.empty((config.replications, length))
    for r in range(config.replications):
        rng = np.random.default_rng([config.seed, STREAM_DRAWS, r])
        sel[r] = rng.random(length)
        clk[r] = rng.random(length)
    return sel, clk


def _dense(instance, values, fill=0.0):
    out = np.full((instance.n_types, instance.n_campaigns), fill, dtype=float)
    out[instance.edge_type, instance.edge_campaign] = values
    return out


def _test_ctr(instance, config):
    tc = config.test_ctr
    if tc is None:
        vals = instance.ctr
    elif isinstance(tc, dict):
        vals = instance.ctr.copy()
        pos = {(instance.impression_types[i].id, instance.campaigns[k].id): e
               for e, (i, k) in enumerate(zip(instance.edge_type, instance.edge_campaign))}
        for key, v in tc.items():
            if tuple(key) not in pos:
                raise ConfigurationError(f"test_ctr refers to unknown edge {key}")
            vals[pos[tuple(key)]] = v
    else:
        vals = np.asarray(tc, dtype=float)
        if vals.shape != (instance.n_edges,):
            raise ConfigurationError("test_ctr must have one entry per edge")
    vals = np.asarray(vals, dtype=float)
    if np.any((vals < 0) | (vals > 1)):
        raise ConfigurationError("test_ctr values must lie in [0, 1]")
    return _dense(instance, vals)


def _payment_rules(instance):
    first = np.array([instance.landscape(i).payment_rule == "first_price"
                      for i in range(instance.n_types)])
    alpha = np.array([instance.landscape(i).alpha for i in range(instance.n_types)])
    return first, alpha


class _Ledger:
    """Budgets and counters for R replications."""

    def __init__(self, instance, config):
        R = config.replications
        self.budgets = instance.budgets * config.budget_fraction
        self.remaining = np.tile(self.budgets, (R, 1))
        self.cpc = instance.cpc
        self.revenue = np.zeros(R)
        self.payments = np.zeros(R)
        self.clicks = np.zeros(R, dtype=int)
        self.wins = np.zeros(R, dtype=int)
        self.bids = np.zeros(R, dtype=int)
        self.first, self.alpha = _payment_rules(instance)
        self.rows = np.arange(R)

    def eligible(self):
        return self.remaining >= self.cpc

    def settle(self, t, k, bid, market, ctr, u_click):
        """Auction, payment and click for replications with a chosen ``k >= 0``."""
        active = k >= 0
        kk = np.where(active, k, 0)
        won = active & (bid > market)
        pay = np.where(self.first[t], self.alpha[t] * bid, market)
        clicked = won & (u_click < ctr)
        self.bids += active
        self.wins += won
        self.payments += np.where(won, pay, 0.0)
        self.clicks += clicked
        charge = np.where(clicked, self.cpc[kk], 0.0)
        self.revenue += charge
        self.remaining[self.rows, kk] -= charge

    def report(self, policy, instance, resolves=0):
        spend = self.budgets - self.remaining
        return SimReport(policy, self.budgets.copy(), self.revenue - self.payments,
                         self.revenue.copy(), self.payments.copy(), spend,
                         self.clicks.copy(), self.wins.copy(), self.bids.copy(), resolves,
                         [c.id for c in instance.campaigns])


def _pick(probs, nobid, u):
    """Sample a campaign per row from ``probs`` plus a no-bid mass; -1 = no bid."""
    total = probs.sum(axis=1) + nobid
    cum = np.cumsum(probs, axis=1)
    target = u * total
    k = (cum <= target[:, None]).sum(axis=1)
    has = (target < cum[:, -1]) & (total > 0)
    return np.where(has, np.minimum(k, probs.shape[1] - 1), -1)


def _check_plan(instance, plan):
    if plan.x.shape != (instance.n_edges,) or plan.b.shape != (instance.n_edges,):
        raise ConfigurationError("plan does not match the instance's edges")


def _run_planned(instance, plans, streams, config, ledger, on_step=None):
    """Policy loop; ``plans`` is a callable giving (X, B) of shape (R, I, K)."""
    ctr = _test_ctr(instance, config)
    sel, clk = _uniforms(config, streams.length)
    rows = ledger.rows
    for j in range(streams.length):
        if on_step is not None:
            on_step(j)
        X, B = plans()
        t = streams.types[:, j]
        x = X[rows, t] if X.ndim == 3 else X[t]
        nobid = np.clip(1.0 - x.sum(axis=1), 0.0, None)
        probs = x * ledger.eligible()
        k = _pick(probs, nobid, sel[:, j])
        kk = np.where(k >= 0, k, 0)
        bid = B[rows, t, kk] if B.ndim == 3 else B[t, kk]
        ledger.settle(t, k, bid, streams.market[:, j], ctr[t, kk], clk[:, j])


def run_two_phase(instance, plan, stream=None, config=None):
    """Follow ``plan``: pick campaign ``k`` for a type-``i`` event with
    probability ``x_ik``, skipping campaigns that cannot pay one more click,
    and bid ``b_ik``. ``stream=None`` draws a fresh stream per replication."""
    cfg = config or SimConfig()
    instance.require_consistent()
    _check_plan(instance, plan)
    streams = _streams(instance, cfg, stream)
    ledger = _Ledger(instance, cfg)
    X, B = _dense(instance, plan.x), _dense(instance, plan.b)
    _run_planned(instance, lambda: (X, B), streams, cfg, ledger)
    return ledger.report("two_phase", instance)


def greedy_bids(instance):
    """Bid each edge would place with unit price ``z = r_ik`` (no budget pressure)."""
    bids, _, _ = instance.optimal_bids(instance.revenue)
    return bids


def run_greedy(instance, stream=None, config=None):
    """Bid for the affordable campaign with the highest ``r_ik`` (lowest index on ties)."""
    cfg = config or SimConfig(policy="greedy")
    instance.require_consistent()
    streams = _streams(instance, cfg, stream)
    ledger = _Ledger(instance, cfg)
    ctr = _test_ctr(instance, cfg)
    _, clk = _uniforms(cfg, streams.length)
    R = _dense(instance, instance.revenue, fill=-np.inf)
    B = _dense(instance, greedy_bids(instance))
    for j in range(streams.length):
        t = streams.types[:, j]
        score = np.where(ledger.eligible(), R[t], -np.inf)
        k = np.argmax(score, axis=1)
        k = np.where(np.isfinite(score[ledger.rows, k]), k, -1)
        kk = np.where(k >= 0, k, 0)
        ledger.settle(t, k, B[t, kk], streams.market[:, j], ctr[t, kk], clk[:, j])
    return ledger.report("greedy", instance)


def run_mpc(instance, stream=None, config=None, solve_config=None, recovery_config=None,
            plan=None):
    """Plan-driven policy that re-plans every ``config.resolve_every`` events.

    A re-plan uses each replication's remaining budgets and scales every
    type's supply by the share of its events not yet seen. A failed re-plan
    keeps the previous plan.
    """
    cfg = config or SimConfig()
    if cfg.resolve_every is None:
        raise ConfigurationError("run_mpc needs config.resolve_every")
    instance.require_consistent()
    scfg = solve_config or SolveConfig()
    base = instance.with_budgets(instance.budgets * cfg.budget_fraction)
    if plan is None:
        plan = two_phase(base, scfg, recovery_config).plan
        if plan is None:
            raise ConfigurationError("initial plan is infeasible")
    _check_plan(instance, plan)
    streams = _streams(instance, cfg, stream)
    ledger = _Ledger(instance, cfg)
    R = cfg.replications
    X = np.tile(_dense(instance, plan.x), (R, 1, 1))
    B = np.tile(_dense(instance, plan.b), (R, 1, 1))
    totals = np.array([np.bincount(streams.types[r], minlength=instance.n_types)
                       for r in range(R)])
    seen = np.zeros_like(totals)
    resolves = 0

    def step(j):
        nonlocal resolves
        if j and j % cfg.resolve_every == 0:
            resolves += 1
            _replan(j)
        seen[ledger.rows, streams.types[:, j]] += 1

    def _replan(j):
        share = np.divide(totals - seen, totals, out=np.zeros(totals.shape, dtype=float),
                          where=totals > 0)
        for r in range(R):
            inst_r = base.with_budgets(np.maximum(ledger.remaining[r], 0.0)) \
                         .with_supplies(instance.supply * share[r])
            try:
                res = two_phase(inst_r, scfg, recovery_config)
            except SolverFailure as exc:
                log.warning("re-plan at event %d failed: %s", j, exc)
                continue
            if res.plan is None:
                log.warning("re-plan at event %d is %s; keeping the previous plan", j, res.status)
                continue
            X[r] = _dense(instance, res.plan.x)
            B[r] = _dense(instance, res.plan.b)

    _run_planned(instance, lambda: (X, B), streams, cfg, ledger, on_step=step)
    n = streams.length
    if n and n % cfg.resolve_every == 0:
        resolves += 1
        _replan(n)
    return ledger.report("two_phase", instance, resolves)


def simulate(instance, plan, config, stream=None):
    """Dispatch on ``config.policy`` (and ``resolve_every`` for re-planning)."""
    if config.policy == "greedy":
        return run_greedy(instance, stream, config)
    if config.resolve_every is not None:
        return run_mpc(instance, stream, config, plan=plan)
    return run_two_phase(instance, plan, stream, config)
