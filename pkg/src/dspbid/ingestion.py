"""Build instances from auction logs.

A log is a UTF-8 tab-separated file with a header line and the columns
``impression_key campaign_key paying_price clicked split``. Every record is
an impression bought for a campaign at ``paying_price``; ``split`` is
``train`` (used to fit CTRs and landscapes) or ``test`` (used for supplies
and default budgets).
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np

from .auction import EstimationError, SecondPriceBeta, TabulatedEmpirical, monte_carlo_beta
from .instance import Campaign, ConfigurationError, Edge, ImpressionType, Instance
from .utility import BudgetCap, utility_from_dict

log = logging.getLogger(__name__)

FIELDS = ("impression_key", "campaign_key", "paying_price", "clicked", "split")
SPLITS = ("train", "test")
MIN_FIT_SAMPLES = 100
# sub-stream id for the Monte-Carlo payment curves
STREAM_MONTECARLO = 3


@dataclass(frozen=True)
class LogRecord:
    impression_key: str
    campaign_key: str
    paying_price: float
    clicked: bool
    split: str = "train"

    def __post_init__(self):
        if not self.impression_key or not self.campaign_key:
            raise ValueError("record keys must be non-empty")
        if not self.paying_price >= 0:
            raise ValueError("paying_price must be non-negative")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no"):
        return False
    raise ValueError(f"cannot read {text!r} as a click flag")


def read_log(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != FIELDS:
            raise ValueError(f"log header must be {' '.join(FIELDS)}")
        records = []
        for n, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(FIELDS):
                raise ValueError(f"line {n}: expected {len(FIELDS)} fields, got {len(row)}")
            try:
                records.append(LogRecord(row[0], row[1], float(row[2]), _parse_bool(row[3]),
                                         row[4].strip()))
            except ValueError as exc:
                raise ValueError(f"line {n}: {exc}") from None
    return records


def write_log(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(FIELDS)
        for r in records:
            w.writerow([r.impression_key, r.campaign_key, repr(float(r.paying_price)),
                        int(r.clicked), r.split])


def _select(records, split):
    return [r for r in records if split is None or r.split == split]


def fit_ctr(records, min_count=5000, split="train"):
    """Click-through rate per (impression, campaign) pair.

    Pairs seen fewer than ``min_count`` times get their campaign's pooled
    rate instead.
    """
    recs = _select(records, split)
    if not recs:
        raise EstimationError("no records to fit click-through rates")
    shown, clicks = Counter(), Counter()
    c_shown, c_clicks = Counter(), Counter()
    for r in recs:
        pair = (r.impression_key, r.campaign_key)
        shown[pair] += 1
        c_shown[r.campaign_key] += 1
        if r.clicked:
            clicks[pair] += 1
            c_clicks[r.campaign_key] += 1
    out = {}
    for pair in sorted(shown):
        n = shown[pair]
        if n >= min_count:
            out[pair] = clicks[pair] / n
        else:
            k = pair[1]
            out[pair] = c_clicks[k] / c_shown[k]
    if out and not any(out.values()):
        warnings.warn("no clicks in the log: every CTR is zero and no revenue is possible")
    return out


@dataclass
class LandscapeFit:
    landscape: object
    method: str  # "moments" or "tabulated"
    a: float | None = None
    b: float | None = None
    samples: int = 0


def _empirical_landscape(prices, max_bid, grid):
    bids = np.linspace(0.0, max_bid, grid)
    srt = np.sort(prices)
    rho = np.searchsorted(srt, bids, side="left") / srt.size
    beta = monte_carlo_beta(prices, bids).beta
    return TabulatedEmpirical(bids, rho, beta)


def fit_beta_landscape(winning_prices, max_bid, grid=128, min_samples=MIN_FIT_SAMPLES):
    """Method-of-moments Beta fit of competing prices on ``[0, max_bid]``.

    Falls back to the empirical distribution (as a tabulated landscape) when
    the sample variance is too large for any Beta law.
    """
    p = np.asarray(winning_prices, dtype=float)
    if p.size < min_samples:
        raise EstimationError(f"need at least {min_samples} prices, got {p.size}")
    if not max_bid > 0:
        raise EstimationError("max_bid must be positive")
    if np.any(p <= 0) or np.any(p > max_bid):
        raise EstimationError("prices must lie in (0, max_bid]")
    x = p / max_bid
    mean = x.mean()
    var = x.var(ddof=1)
    spread = mean * (1.0 - mean)
    if var <= 0 or var >= spread:
        return LandscapeFit(_empirical_landscape(p, max_bid, grid), "tabulated", samples=p.size)
    common = spread / var - 1.0
    a, b = mean * common, (1.0 - mean) * common
    return LandscapeFit(SecondPriceBeta(a, b, max_bid), "moments", a, b, p.size)


def count_supply(records, split="test", known=None):
    """Number of records per impression key within ``split``."""
    counts = Counter(r.impression_key for r in _select(records, split))
    out = {k: 0 for k in (known or [])}
    for key, n in sorted(counts.items()):
        if known is not None and key not in out:
            warnings.warn(f"impression type {key!r} is not in the known set; adding it")
        out[key] = n
    return out


def _tabulate(fit, max_bid, grid, mc_samples, rng):
    """Landscape on a bid grid: win curve from the fit, payments by Monte Carlo."""
    if fit.method == "tabulated":
        return fit.landscape
    land = fit.landscape
    bids = np.linspace(0.0, max_bid, grid)
    rho = land.rho(bids)
    draws = land.sample_market_prices(rng, mc_samples)
    beta = monte_carlo_beta(draws, bids).beta
    return TabulatedEmpirical(bids, rho, beta)


def build_instance(records, budgets=None, cpcs=None, utilities=None, min_count=5000,
                   mc_samples=100_000, grid=128, seed=0, max_bids=None):
    """Instance from a log.

    ``budgets``, ``cpcs`` and ``utilities`` are dicts keyed by campaign;
    missing budgets default to the campaign's test-split spend, missing cpcs
    to 1. ``max_bids`` maps impression keys to bid caps (default: the largest
    price seen for the type).
    """
    budgets, cpcs, utilities = budgets or {}, cpcs or {}, utilities or {}
    train = _select(records, "train")
    test = _select(records, "test")
    if not train:
        raise EstimationError("log has no train records")
    ctr = fit_ctr(records, min_count, split="train")
    pooled = defaultdict(lambda: [0, 0])
    for r in train:
        pooled[r.campaign_key][0] += 1
        pooled[r.campaign_key][1] += r.clicked
    prices = defaultdict(list)
    for r in records:
        prices[r.impression_key].append(r.paying_price)
    train_prices = defaultdict(list)
    for r in train:
        if r.paying_price > 0:
            train_prices[r.impression_key].append(r.paying_price)
    pairs = sorted({(r.impression_key, r.campaign_key) for r in records})
    # sorted samples and exact sums keep the result independent of record order
    paid = defaultdict(list)
    for r in test:
        paid[r.campaign_key].append(r.paying_price)
    spend = {k: math.fsum(v) for k, v in paid.items()}
    supply = count_supply(records, "test", known=sorted(prices))
    rng = np.random.default_rng([seed, STREAM_MONTECARLO])

    types, landscapes = [], {}
    for key in sorted(prices):
        cap = float((max_bids or {}).get(key, max(prices[key])))
        if not cap > 0:
            warnings.warn(f"impression type {key!r} has no positive prices; dropping it")
            continue
        sample = np.sort(np.asarray(train_prices.get(key, []), dtype=float))
        sample = sample[sample <= cap]
        if sample.size == 0:
            warnings.warn(f"impression type {key!r} has no train prices; dropping it")
            continue
        try:
            fit = fit_beta_landscape(sample, cap, grid)
        except EstimationError:
            warnings.warn(f"impression type {key!r} has {sample.size} prices; using the "
                          "empirical distribution")
            fit = LandscapeFit(_empirical_landscape(sample, cap, grid), "tabulated",
                               samples=sample.size)
        landscapes[f"L_{key}"] = _tabulate(fit, cap, grid, mc_samples, rng)
        types.append(ImpressionType(key, float(supply.get(key, 0)), cap, f"L_{key}"))
    kept = {t.id for t in types}

    campaigns = []
    for k in sorted({p[1] for p in pairs}):
        if pooled[k][0] == 0:
            warnings.warn(f"campaign {k!r} has no train impressions; excluding it")
            continue
        m = float(budgets.get(k, spend.get(k, 0.0)))
        spec = utilities.get(k)
        if spec is None:
            util = BudgetCap(m)
        elif isinstance(spec, dict):
            util = utility_from_dict({**spec, "budget": m})
        else:
            util = spec.with_budget(m)
        campaigns.append(Campaign(k, float(cpcs.get(k, 1.0)), util))
    camp_ids = {c.id for c in campaigns}
    unknown = set(budgets) - camp_ids
    if unknown:
        raise ConfigurationError(f"budgets given for campaigns not in the log: {sorted(unknown)}")

    edges = []
    for i, k in pairs:
        if i in kept and k in camp_ids:
            theta = ctr.get((i, k))
            if theta is None:
                theta = pooled[k][1] / pooled[k][0]
            edges.append(Edge(i, k, float(theta)))
    inst = Instance(types, campaigns, edges, landscapes)
    log.debug("built %r from %d records", inst, len(records))
    return inst
