"""Planning problem data model, primal objective and feasibility.

Edges, supplies and plans are kept as numpy arrays aligned with
``Instance.edges``; ids only matter at the I/O boundary.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .auction import SecondPriceBeta, beta_curves, landscape_from_dict
from .utility import NEG_INF, utility_from_dict

FEAS_TOL = 1e-9


class ConfigurationError(ValueError):
    """Inconsistent instance or plan (unknown references, size mismatch)."""


@dataclass(frozen=True)
class ImpressionType:
    id: str
    supply: float
    max_bid: float
    landscape_id: str


@dataclass(frozen=True)
class Campaign:
    id: str
    cpc: float
    utility: object = None

    @property
    def budget(self):
        return self.utility.budget


@dataclass(frozen=True)
class Edge:
    impression_id: str
    campaign_id: str
    ctr: float
    revenue: float | None = None


@dataclass(frozen=True)
class Violation:
    entity: str
    rule: str
    message: str
    severity: str = "error"

    def __str__(self):
        return f"{self.severity}: {self.entity}: {self.rule}: {self.message}"


class Instance:
    """Bipartite impression-type / campaign graph with all model parameters.

    Treated as immutable: the ``with_*`` methods return modified copies.
    """

    def __init__(self, impression_types, campaigns, edges, landscapes):
        self.impression_types = tuple(impression_types)
        self.campaigns = tuple(campaigns)
        self.edges = tuple(
            e if e.revenue is not None else
            Edge(e.impression_id, e.campaign_id, e.ctr, self._cpc_of(e.campaign_id, campaigns) * e.ctr)
            for e in edges)
        self.landscapes = dict(landscapes)
        self.type_index = {t.id: i for i, t in enumerate(self.impression_types)}
        self.campaign_index = {c.id: k for k, c in enumerate(self.campaigns)}
        self._broken = [e for e in self.edges
                        if e.impression_id not in self.type_index
                        or e.campaign_id not in self.campaign_index]
        good = [e for e in self.edges if e not in self._broken]
        self.edge_type = np.array([self.type_index[e.impression_id] for e in good], dtype=int)
        self.edge_campaign = np.array([self.campaign_index[e.campaign_id] for e in good], dtype=int)
        self.ctr = np.array([e.ctr for e in good], dtype=float)
        self.revenue = np.array([e.revenue for e in good], dtype=float)
        self.supply = np.array([t.supply for t in self.impression_types], dtype=float)
        self.max_bid = np.array([t.max_bid for t in self.impression_types], dtype=float)
        self.cpc = np.array([c.cpc for c in self.campaigns], dtype=float)
        self.budgets = np.array([c.budget for c in self.campaigns], dtype=float)
        self.edge_supply = self.supply[self.edge_type] if len(good) else np.zeros(0)
        self.edge_max_bid = self.max_bid[self.edge_type] if len(good) else np.zeros(0)
        n_types = len(self.impression_types)
        self.type_edges = [np.flatnonzero(self.edge_type == i) for i in range(n_types)]
        self.campaign_edges = [np.flatnonzero(self.edge_campaign == k)
                               for k in range(len(self.campaigns))]
        # edges sorted by (type, campaign); used for per-type argmax with a
        # lowest-campaign tie-break
        self._by_type = np.lexsort((self.edge_campaign, self.edge_type))
        # second-price Beta types are evaluated together in one call
        spb = np.zeros(n_types, dtype=bool)
        params = np.ones((n_types, 3))
        for i, t in enumerate(self.impression_types):
            land = self.landscapes.get(t.landscape_id)
            if isinstance(land, SecondPriceBeta):
                spb[i] = True
                params[i] = land.a, land.b, land.max_bid
        self._spb_types = spb
        self._spb_edges = np.flatnonzero(spb[self.edge_type]) if len(good) else np.zeros(0, int)
        self._spb_params = params[self.edge_type[self._spb_edges]].T if len(good) else None

    @staticmethod
    def _cpc_of(cid, campaigns):
        for c in campaigns:
            if c.id == cid:
                return c.cpc
        return math.nan

    # -- sizes and adjacency ---------------------------------------------
    @property
    def n_edges(self):
        return self.edge_type.size

    @property
    def n_types(self):
        return len(self.impression_types)

    @property
    def n_campaigns(self):
        return len(self.campaigns)

    @property
    def utilities(self):
        return [c.utility for c in self.campaigns]

    def campaigns_of(self, type_id):
        """The set K_i of campaign ids targeting an impression type."""
        i = self.type_index[type_id]
        return [self.campaigns[k].id for k in self.edge_campaign[self.type_edges[i]]]

    def types_of(self, campaign_id):
        """The set I_k of impression-type ids a campaign targets."""
        k = self.campaign_index[campaign_id]
        return [self.impression_types[i].id for i in self.edge_type[self.campaign_edges[k]]]

    def landscape(self, i):
        """Landscape of impression type ``i`` (index)."""
        lid = self.impression_types[i].landscape_id
        try:
            return self.landscapes[lid]
        except KeyError:
            raise ConfigurationError(f"unknown landscape {lid!r}") from None

    def require_consistent(self):
        if self._broken:
            e = self._broken[0]
            raise ConfigurationError(
                f"edge ({e.impression_id}, {e.campaign_id}) references an unknown endpoint")

    # -- per-edge landscape evaluation --------------------------------------
    def edge_curves(self, bids):
        """``(rho, beta)`` per edge for the given bid vector."""
        self.require_consistent()
        bids = np.asarray(bids, dtype=float)
        r = np.zeros(self.n_edges)
        bt = np.zeros(self.n_edges)
        if np.any(bids < -FEAS_TOL) or np.any(bids > self.edge_max_bid + FEAS_TOL):
            raise ValueError("bid outside [0, max_bid]")
        idx = self._spb_edges
        if idx.size:
            a, b, scale = self._spb_params
            r[idx], bt[idx] = beta_curves(a, b, scale, np.clip(bids[idx], 0.0, None))
        for i, idx in enumerate(self.type_edges):
            if idx.size and not self._spb_types[i]:
                r[idx], bt[idx] = self.landscape(i).curves(bids[idx])
        return r, bt

    def optimal_bids(self, z, method="auto"):
        """Per-edge maximizers of ``h_i(z_e, .)`` over ``[0, max_bid_i]``.

        Returns ``(bids, h_values, rho_at_bids)``.
        """
        self.require_consistent()
        z = np.asarray(z, dtype=float)
        bids = np.zeros(self.n_edges)
        fast = self._spb_edges if method == "auto" else np.zeros(0, int)
        if fast.size:
            bids[fast] = np.clip(z[fast], 0.0, self.edge_max_bid[fast])
        for i, idx in enumerate(self.type_edges):
            if idx.size and not (method == "auto" and self._spb_types[i]):
                bids[idx], _ = self.landscape(i).optimal_bids(
                    z[idx], self.max_bid[i], method=method)
        r, bt = self.edge_curves(bids)
        return bids, (z - bt) * r, r

    def per_type_argmax(self, values):
        """Best edge per type (lowest campaign index on ties) or -1."""
        order = self._by_type
        best = np.full(self.n_types, -1, dtype=int)
        if order.size == 0:
            return best
        t = self.edge_type[order]
        v = values[order]
        starts = np.r_[0, np.flatnonzero(np.diff(t)) + 1]
        seg_max = np.maximum.reduceat(v, starts)
        seg_id = np.repeat(np.arange(starts.size), np.diff(np.r_[starts, v.size]))
        hit = np.flatnonzero(v == seg_max[seg_id])
        _, first = np.unique(seg_id[hit], return_index=True)
        best[t[starts]] = order[hit[first]]
        return best

    # -- copies -------------------------------------------------------------
    def with_budgets(self, budgets):
        camps = [Campaign(c.id, c.cpc, c.utility.with_budget(float(m)))
                 for c, m in zip(self.campaigns, budgets)]
        return Instance(self.impression_types, camps, self.edges, self.landscapes)

    def with_utilities(self, utilities):
        camps = [Campaign(c.id, c.cpc, u) for c, u in zip(self.campaigns, utilities)]
        return Instance(self.impression_types, camps, self.edges, self.landscapes)

    def with_supplies(self, supplies):
        types = [ImpressionType(t.id, float(s), t.max_bid, t.landscape_id)
                 for t, s in zip(self.impression_types, supplies)]
        return Instance(types, self.campaigns, self.edges, self.landscapes)

    # -- serialization ------------------------------------------------------
    def to_dict(self):
        return {
            "impression_types": [
                {"id": t.id, "supply": t.supply, "max_bid": t.max_bid,
                 "landscape_id": t.landscape_id} for t in self.impression_types],
            "campaigns": [
                {"id": c.id, "budget": c.budget, "cpc": c.cpc, "utility": c.utility.to_dict()}
                for c in self.campaigns],
            "edges": [
                {"impression_id": e.impression_id, "campaign_id": e.campaign_id,
                 "ctr": e.ctr, "revenue": e.revenue} for e in self.edges],
            "landscapes": [{"id": lid, **land.to_dict()} for lid, land in self.landscapes.items()],
        }

    @classmethod
    def from_dict(cls, d):
        landscapes = {}
        for ld in d.get("landscapes", []):
            landscapes[ld["id"]] = landscape_from_dict(ld)
        types = [ImpressionType(str(t["id"]), float(t["supply"]), float(t["max_bid"]),
                                str(t["landscape_id"])) for t in d["impression_types"]]
        camps = []
        for c in d["campaigns"]:
            ud = dict(c.get("utility") or {"kind": "budget_cap"})
            if "budget" in c and "budget" in ud and not math.isclose(c["budget"], ud["budget"]):
                raise ConfigurationError(f"campaign {c['id']}: budget disagrees with utility budget")
            camps.append(Campaign(str(c["id"]), float(c["cpc"]),
                                  utility_from_dict(ud, c.get("budget"))))
        edges = [Edge(str(e["impression_id"]), str(e["campaign_id"]), float(e["ctr"]),
                      None if e.get("revenue") is None else float(e["revenue"]))
                 for e in d["edges"]]
        return cls(types, camps, edges, landscapes)

    def __repr__(self):
        return (f"Instance({self.n_types} types, {self.n_campaigns} campaigns, "
                f"{self.n_edges} edges)")


def load_instance(path):
    with open(path) as fh:
        return Instance.from_dict(json.load(fh))


def save_instance(instance, path):
    with open(path, "w") as fh:
        json.dump(instance.to_dict(), fh, indent=2)


@dataclass
class Plan:
    """Allocation probabilities ``x`` and bids ``b`` aligned with the edges."""
    x: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.b = np.asarray(self.b, dtype=float)

    @classmethod
    def zeros(cls, instance):
        return cls(np.zeros(instance.n_edges), np.zeros(instance.n_edges))

    def to_records(self, instance):
        return [{"impression_id": instance.impression_types[i].id,
                 "campaign_id": instance.campaigns[k].id,
                 "x": float(x), "bid": float(b)}
                for i, k, x, b in zip(instance.edge_type, instance.edge_campaign, self.x, self.b)]

    @classmethod
    def from_records(cls, instance, records):
        pos = {(instance.impression_types[i].id, instance.campaigns[k].id): e
               for e, (i, k) in enumerate(zip(instance.edge_type, instance.edge_campaign))}
        x = np.zeros(instance.n_edges)
        b = np.zeros(instance.n_edges)
        for r in records:
            key = (str(r["impression_id"]), str(r["campaign_id"]))
            if key not in pos:
                raise ConfigurationError(f"plan edge {key} is not in the instance")
            x[pos[key]] = r["x"]
            b[pos[key]] = r["bid"]
        return cls(x, b)


def validate(instance):
    """Every invariant violation as data; an empty list means well formed."""
    out = []
    for t in instance.impression_types:
        ent = f"impression_type {t.id}"
        if not t.supply >= 0:
            out.append(Violation(ent, "supply", f"supply {t.supply} is negative"))
        if not t.max_bid > 0:
            out.append(Violation(ent, "max_bid", f"max_bid {t.max_bid} must be positive"))
        land = instance.landscapes.get(t.landscape_id)
        if land is None:
            out.append(Violation(ent, "landscape_id", f"unknown landscape {t.landscape_id!r}"))
        elif land.max_bid < t.max_bid * (1 - 1e-12):
            out.append(Violation(ent, "landscape_domain",
                                 f"landscape covers [0, {land.max_bid}] but max_bid is {t.max_bid}"))
    for c in instance.campaigns:
        ent = f"campaign {c.id}"
        if not c.budget > 0:
            out.append(Violation(ent, "budget", f"budget {c.budget} must be positive"))
        if not c.cpc > 0:
            out.append(Violation(ent, "cpc", f"cpc {c.cpc} must be positive"))
    seen = set()
    cpc = {c.id: c.cpc for c in instance.campaigns}
    for e in instance.edges:
        ent = f"edge ({e.impression_id}, {e.campaign_id})"
        if e.impression_id not in instance.type_index:
            out.append(Violation(ent, "endpoint", f"unknown impression type {e.impression_id!r}"))
        if e.campaign_id not in instance.campaign_index:
            out.append(Violation(ent, "endpoint", f"unknown campaign {e.campaign_id!r}"))
        if not 0 <= e.ctr <= 1:
            out.append(Violation(ent, "ctr", f"ctr {e.ctr} outside [0, 1]"))
        if not math.isnan(e.revenue) and not e.revenue >= 0:
            out.append(Violation(ent, "revenue", f"revenue {e.revenue} is negative"))
        if e.campaign_id in cpc and not math.isclose(
                e.revenue, cpc[e.campaign_id] * e.ctr, rel_tol=1e-12, abs_tol=1e-15):
            out.append(Violation(ent, "revenue_identity",
                                 f"revenue {e.revenue} != cpc*ctr = {cpc[e.campaign_id] * e.ctr}"))
        key = (e.impression_id, e.campaign_id)
        if key in seen:
            out.append(Violation(ent, "unique_pair", "duplicate edge"))
        seen.add(key)
    targeted = {e.campaign_id for e in instance.edges}
    for c in instance.campaigns:
        if c.id not in targeted:
            out.append(Violation(f"campaign {c.id}", "isolated_campaign",
                                 "campaign has no edges", severity="warning"))
    return out


def plan_violations(instance, plan, tol=FEAS_TOL):
    """Feasibility of a plan in S: simplex rows and bid bounds."""
    out = []
    if plan.x.shape != (instance.n_edges,) or plan.b.shape != (instance.n_edges,):
        return [Violation("plan", "shape", "plan does not match the instance edges")]
    if np.any(plan.x < -tol):
        out.append(Violation("plan", "x_nonnegative", "negative allocation"))
    rows = np.bincount(instance.edge_type, weights=plan.x, minlength=instance.n_types)
    for i in np.flatnonzero(rows > 1 + tol):
        out.append(Violation(f"impression_type {instance.impression_types[i].id}", "simplex",
                             f"allocations sum to {rows[i]:.12g}"))
    if np.any(plan.b < -tol) or np.any(plan.b > instance.edge_max_bid + tol):
        out.append(Violation("plan", "bid_bounds", "bid outside [0, max_bid]"))
    return out


def _check_plan(instance, plan):
    if plan.x.shape != (instance.n_edges,) or plan.b.shape != (instance.n_edges,):
        raise ConfigurationError("plan does not match the instance edges")


def expected_spend(instance, plan, curves=None):
    """Expected spend ``v_k = sum_i r_ik s_i x_ik rho_i(b_ik)`` per campaign."""
    _check_plan(instance, plan)
    r, _ = curves if curves is not None else instance.edge_curves(plan.b)
    per_edge = instance.revenue * instance.edge_supply * plan.x * r
    return np.bincount(instance.edge_campaign, weights=per_edge, minlength=instance.n_campaigns)


def expected_profit(instance, plan, curves=None):
    """Expected profit ``sum_e (r_e - beta(b_e)) s x rho(b_e)``."""
    _check_plan(instance, plan)
    r, bt = curves if curves is not None else instance.edge_curves(plan.b)
    return float(np.sum((instance.revenue - bt) * instance.edge_supply * plan.x * r))


def utility_total(instance, spend):
    total = 0.0
    for c, v in zip(instance.campaigns, spend):
        uk = c.utility.u(max(float(v), 0.0))
        if uk == NEG_INF:
            return NEG_INF
        total += uk
    return total


def objective(instance, plan, tol=0.0):
    """``F(x, b) = profit + sum_k u_k(v_k)``; ``-inf`` outside the utility domains.

    ``tol`` lets spends exceed a budget (or miss a floor) by that relative
    amount, for plans that come back from a floating-point solver.
    """
    curves = instance.edge_curves(plan.b)
    v = expected_spend(instance, plan, curves)
    if tol:
        v = _snap_spend(instance, v, tol)
    ut = utility_total(instance, v)
    if ut == NEG_INF:
        return NEG_INF
    return expected_profit(instance, plan, curves) + ut


def _snap_spend(instance, v, tol):
    v = v.copy()
    for k, c in enumerate(instance.campaigns):
        m = c.budget
        slack = tol * max(1.0, m)
        if m < v[k] <= m + slack:
            v[k] = m
        floor = getattr(c.utility, "floor", None)
        if floor is not None and floor - slack <= v[k] < floor:
            v[k] = floor
    return v
