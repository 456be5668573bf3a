"""Random instances and auction logs for tests, demos and experiments."""
from __future__ import annotations

import numpy as np

from .auction import SecondPriceBeta, UniformCompetitors
from .instance import Campaign, Edge, ImpressionType, Instance
from .utility import BudgetCap


def _edges_for(rng, n_types, n_campaigns, n_edges):
    """Bipartite edge set touching every type and every campaign."""
    if not max(n_types, n_campaigns) <= n_edges <= n_types * n_campaigns:
        raise ValueError("edge count cannot cover every type and campaign")
    pairs = set()
    camps = rng.permutation(n_campaigns)
    for i in range(n_types):
        k = camps[i] if i < n_campaigns else rng.integers(n_campaigns)
        pairs.add((i, int(k)))
    for k in range(n_campaigns):
        if not any(p[1] == k for p in pairs):
            pairs.add((int(rng.integers(n_types)), k))
    free = [(i, k) for i in range(n_types) for k in range(n_campaigns) if (i, k) not in pairs]
    extra = n_edges - len(pairs)
    if extra < 0:
        raise ValueError("edge count too small for this many types and campaigns")
    for j in rng.choice(len(free), size=extra, replace=False):
        pairs.add(free[j])
    return sorted(pairs)


def random_instance(rng, n_types=3, n_campaigns=2, n_edges=None, landscape="beta",
                    budget_scale=(0.2, 1.0)):
    """Small random instance with BudgetCap utilities.

    Beta shape parameters are drawn from [1.5, 5] so every landscape passes the
    monotonicity conditions. Budgets are ``budget_scale`` times the spend the
    campaign would reach bidding its full value on all of its edges.
    """
    if n_edges is None:
        n_edges = int(rng.integers(max(n_types, n_campaigns), n_types * n_campaigns + 1))
    pairs = _edges_for(rng, n_types, n_campaigns, n_edges)
    landscapes = {}
    types = []
    for i in range(n_types):
        max_bid = float(rng.uniform(0.5, 2.0))
        if landscape == "beta":
            land = SecondPriceBeta(float(rng.uniform(1.5, 5.0)), float(rng.uniform(1.5, 5.0)), max_bid)
        elif landscape == "uniform_competitors":
            land = UniformCompetitors(int(rng.integers(1, 4)), max_bid, float(rng.uniform(0.5, 1.0)))
        else:
            raise ValueError(f"unknown landscape family {landscape!r}")
        landscapes[f"L{i}"] = land
        types.append(ImpressionType(f"i{i}", float(rng.uniform(50, 500)), max_bid, f"L{i}"))
    cpc = rng.uniform(1.0, 5.0, n_campaigns)
    edges = [Edge(f"i{i}", f"c{k}", float(rng.uniform(0.05, 0.3))) for i, k in pairs]
    full = np.zeros(n_campaigns)
    for (i, k), e in zip(pairs, edges):
        r = cpc[k] * e.ctr
        b = min(r, types[i].max_bid)
        full[k] += r * types[i].supply * float(landscapes[f"L{i}"].rho(b))
    scale = rng.uniform(*budget_scale, n_campaigns)
    campaigns = [Campaign(f"c{k}", float(cpc[k]), BudgetCap(float(max(scale[k] * full[k], 1e-3))))
                 for k in range(n_campaigns)]
    return Instance(types, campaigns, edges, landscapes)


def market_instance(seed=0, n_types=23, n_campaigns=4, n_edges=43, events=40000,
                    budget_scale=0.6):
    """Instance shaped like a small DSP desk.

    ``events`` impressions are split over the types; second-price Beta
    landscapes on [0, 1]; revenues per impression fall in roughly
    [0.1, 0.9] so truthful bids compete across the whole price range.
    Budgets are ``budget_scale`` times each campaign's expected spend under the
    greedy policy without budget limits.
    """
    rng = np.random.default_rng([seed, 7])
    pairs = _edges_for(rng, n_types, n_campaigns, n_edges)
    weights = rng.dirichlet(np.full(n_types, 2.0))
    supply = np.maximum(np.rint(weights * events), 1.0)
    landscapes, types = {}, []
    for i in range(n_types):
        land = SecondPriceBeta(float(rng.uniform(1.5, 4.0)), float(rng.uniform(2.0, 6.0)), 1.0)
        landscapes[f"L{i}"] = land
        types.append(ImpressionType(f"i{i}", float(supply[i]), 1.0, f"L{i}"))
    cpc = rng.uniform(1.0, 3.0, n_campaigns)
    edges = []
    for i, k in pairs:
        target_r = rng.uniform(0.1, 0.9)
        edges.append(Edge(f"i{i}", f"c{k}", float(min(target_r / cpc[k], 1.0))))
    probe = Instance(types, [Campaign(f"c{k}", float(cpc[k]), BudgetCap(1.0))
                             for k in range(n_campaigns)], edges, landscapes)
    spend = greedy_expected_spend(probe)
    campaigns = [Campaign(f"c{k}", float(cpc[k]), BudgetCap(float(budget_scale * max(spend[k], cpc[k]))))
                 for k in range(n_campaigns)]
    return Instance(types, campaigns, edges, landscapes)


def greedy_expected_spend(instance):
    """Expected spend per campaign when every type goes to its highest-revenue
    campaign, bidding the greedy bid, with no budget limit."""
    from .simulator import greedy_bids

    bids = greedy_bids(instance)
    rho, _ = instance.edge_curves(bids)
    best = instance.per_type_argmax(instance.revenue)
    spend = np.zeros(instance.n_campaigns)
    for e in best[best >= 0]:
        spend[instance.edge_campaign[e]] += instance.revenue[e] * instance.edge_supply[e] * rho[e]
    return spend


def synthetic_log(instance, seed=0, scale=1.0, test_scale=None):
    """Auction log drawn from ``instance``.

    Each split holds ``round(scale * s_i)`` impressions of type ``i`` (test
    split: ``test_scale``, default ``scale``), priced by the type's competing
    bid distribution. Impressions of a type are dealt to its campaigns in
    turn, so every edge appears once a type has as many impressions as
    campaigns; clicks follow the edge CTR.
    """
    from .ingestion import LogRecord

    rng = np.random.default_rng([seed, 11])
    records = []
    for split, sc in (("train", scale), ("test", scale if test_scale is None else test_scale)):
        for i, t in enumerate(instance.impression_types):
            idx = instance.type_edges[i]
            n = int(round(sc * t.supply))
            if idx.size == 0 or n == 0:
                continue
            prices = instance.landscape(i).sample_market_prices(rng, n)
            edge = idx[np.arange(n) % idx.size]
            clicked = rng.random(n) < instance.ctr[edge]
            for p, e, c in zip(prices, edge, clicked):
                records.append(LogRecord(t.id, instance.campaigns[instance.edge_campaign[e]].id,
                                         float(p), bool(c), split))
    order = rng.permutation(len(records))
    return [records[j] for j in order]
