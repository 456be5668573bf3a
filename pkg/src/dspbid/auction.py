"""Bid landscapes, the per-edge profit kernel and optimal bidding.

A landscape models one impression type's auction through two curves on
``[0, max_bid]``: the win probability ``rho(b)`` and the expected payment
given a win ``beta(b)``. Every landscape here is the distribution of the
highest competing bid ``M`` plus a payment rule, which is also what the
simulator samples from.

All curve methods are vectorized over bids; ``optimal_bids`` is vectorized
over the expected revenue ``z``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._betainc import betainc

GRID_SIZE = 512
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_DOMAIN_TOL = 1e-12


class DomainError(ValueError):
    """A bid outside the landscape's domain."""


class LandscapeError(ValueError):
    """Landscape parameters violating the model assumptions."""


class EstimationError(ValueError):
    """Not enough data to estimate a curve."""


# ---------------------------------------------------------------------------
# win curves (distribution of the highest competing bid)

@dataclass(frozen=True)
class WinCurve:
    """CDF of the highest competing bid on ``[0, max_bid]``.

    kind is one of ``beta`` (params a, b; scaled to max_bid), ``power``
    (param n: ``(b/max_bid)**n``), ``ratio`` (param c: ``b/(c+b)``) or
    ``exponential`` (param rate: ``1 - exp(-rate*b)``). Mass not reached by
    ``max_bid`` belongs to competing bids above the cap.
    """
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        need = {"beta": ("a", "b"), "power": ("n",), "ratio": ("c",),
                "exponential": ("rate",)}
        if self.kind not in need:
            raise LandscapeError(f"unknown win curve kind {self.kind!r}")
        for name in need[self.kind]:
            if not self.params.get(name, 0) > 0:
                raise LandscapeError(f"win curve {self.kind}: {name} must be positive")

    def cdf(self, b, max_bid):
        b = np.asarray(b, dtype=float)
        p = self.params
        if self.kind == "beta":
            return betainc(p["a"], p["b"], b / max_bid)
        if self.kind == "power":
            return (b / max_bid) ** p["n"]
        if self.kind == "ratio":
            return b / (p["c"] + b)
        return -np.expm1(-p["rate"] * b)

    def sample(self, rng, size, max_bid):
        p = self.params
        if self.kind == "beta":
            return max_bid * rng.beta(p["a"], p["b"], size)
        if self.kind == "power":
            return max_bid * rng.random(size) ** (1.0 / p["n"])
        u = rng.random(size)
        if self.kind == "ratio":
            m = p["c"] * u / (1.0 - u)
        else:
            m = -np.log1p(-u) / p["rate"]
        return np.minimum(m, max_bid)

    def to_dict(self):
        return {"kind": self.kind, **self.params}


# ---------------------------------------------------------------------------
# landscapes

class BidLandscape:
    """Common interface; subclasses provide ``_rho`` and ``_beta``."""

    kind: str
    max_bid: float
    payment_rule: str = "second_price"
    alpha: float = 1.0

    def _check_bids(self, b):
        b = np.asarray(b, dtype=float)
        if np.any(b < -_DOMAIN_TOL) or np.any(b > self.max_bid * (1 + _DOMAIN_TOL) + _DOMAIN_TOL):
            raise DomainError(f"bid outside [0, {self.max_bid}]")
        return np.clip(b, 0.0, self.max_bid)

    def rho(self, b):
        b = self._check_bids(b)
        return np.clip(self._rho(b), 0.0, 1.0)

    def beta(self, b):
        """Expected payment conditional on winning; 0 where ``rho`` is 0."""
        b = self._check_bids(b)
        return self._beta(b)

    def curves(self, b):
        """``(rho(b), beta(b))`` in one evaluation."""
        b = self._check_bids(b)
        return np.clip(self._rho(b), 0.0, 1.0), self._beta(b)

    def h(self, z, b):
        """Expected profit ``(z - beta(b)) * rho(b)`` of one bid."""
        r, bt = self.curves(b)
        return (np.asarray(z, dtype=float) - bt) * r

    def closed_form_bids(self, z, max_bid):
        """Optimal bids in closed form, or None when the kind has none."""
        return None

    def optimal_bids(self, z, max_bid=None, method="auto", grid_size=GRID_SIZE):
        """Maximize ``h(z, .)`` over ``[0, max_bid]`` for each entry of ``z``.

        Returns ``(bids, values)``. ``method`` is ``auto`` (closed form when
        available), ``closed`` or ``numeric`` (dense grid scan followed by
        golden-section refinement).
        """
        z = np.asarray(z, dtype=float)
        max_bid = self.max_bid if max_bid is None else min(float(max_bid), self.max_bid)
        flat = z.reshape(-1)
        bids = None
        if method in ("auto", "closed"):
            bids = self.closed_form_bids(flat, max_bid)
            if bids is None and method == "closed":
                raise ValueError(f"{self.kind} has no closed-form optimal bid")
        if bids is None:
            bids, vals = self._numeric_bids(flat, max_bid, grid_size)
        else:
            vals = self.h(flat, bids)
        return bids.reshape(z.shape), vals.reshape(z.shape)

    def _numeric_bids(self, z, max_bid, grid_size):
        grid = np.linspace(0.0, max_bid, grid_size)
        rho_g = self.rho(grid)
        beta_g = self.beta(grid)
        vals = (z[:, None] - beta_g[None, :]) * rho_g[None, :]
        j = vals.argmax(axis=1)
        best_b = grid[j]
        best_h = vals[np.arange(z.size), j]
        lo = grid[np.maximum(j - 1, 0)]
        hi = grid[np.minimum(j + 1, grid_size - 1)]
        b_ref = _golden_max(lambda b: self.h(z, b), lo, hi)
        h_ref = self.h(z, b_ref)
        better = h_ref > best_h
        return np.where(better, b_ref, best_b), np.where(better, h_ref, best_h)

    def sample_market_prices(self, rng, size):
        raise NotImplementedError

    def payment(self, bid, market_price):
        bid = np.asarray(bid, dtype=float)
        if self.payment_rule == "first_price":
            return self.alpha * bid
        return np.asarray(market_price, dtype=float) * np.ones_like(bid)

    def _validate_shape(self, n=257):
        grid = np.linspace(0.0, self.max_bid, n)
        r = self.rho(grid)
        bt = self.beta(grid)
        if np.any(np.diff(r) < -1e-12):
            raise LandscapeError(f"{self.kind}: rho is decreasing somewhere")
        if np.any(np.diff(bt) < -1e-9 * max(1.0, self.max_bid)):
            raise LandscapeError(f"{self.kind}: beta is decreasing somewhere")
        if np.any(bt > grid + 1e-9):
            raise LandscapeError(f"{self.kind}: beta(b) exceeds b")


class SecondPriceBeta(BidLandscape):
    """Second-price auction against ``M = max_bid * Beta(a, b)``."""

    kind = "second_price_beta"

    def __init__(self, a, b, max_bid):
        if not (a > 0 and b > 0 and max_bid > 0):
            raise LandscapeError("second_price_beta needs a, b, max_bid > 0")
        self.a, self.b, self.max_bid = float(a), float(b), float(max_bid)
        self._validate_shape()

    def _rho(self, b):
        return betainc(self.a, self.b, b / self.max_bid)

    def _beta(self, b):
        return beta_curves(self.a, self.b, self.max_bid, b)[1]

    def curves(self, b):
        return beta_curves(self.a, self.b, self.max_bid, self._check_bids(b))

    def closed_form_bids(self, z, max_bid):
        return np.clip(z, 0.0, max_bid)

    def sample_market_prices(self, rng, size):
        return self.max_bid * rng.beta(self.a, self.b, size)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b, "max_bid": self.max_bid}

    def __repr__(self):
        return f"SecondPriceBeta(a={self.a:g}, b={self.b:g}, max_bid={self.max_bid:g})"


class ScaledFirstPrice(BidLandscape):
    """First-price auction where the winner pays ``alpha`` times its bid."""

    kind = "scaled_first_price"
    payment_rule = "first_price"

    def __init__(self, alpha, win_curve, max_bid):
        if not (0 < alpha <= 1):
            raise LandscapeError("alpha must lie in (0, 1]")
        if not max_bid > 0:
            raise LandscapeError("max_bid must be positive")
        if isinstance(win_curve, dict):
            d = dict(win_curve)
            win_curve = WinCurve(d.pop("kind"), d)
        self.alpha, self.win_curve, self.max_bid = float(alpha), win_curve, float(max_bid)
        self._validate_shape()

    def _rho(self, b):
        return self.win_curve.cdf(b, self.max_bid)

    def _beta(self, b):
        return self.alpha * b

    def closed_form_bids(self, z, max_bid):
        if self.win_curve.kind == "power":
            n = self.win_curve.params["n"]
            return np.clip(n * z / (self.alpha * (n + 1)), 0.0, max_bid)
        return None

    def sample_market_prices(self, rng, size):
        return self.win_curve.sample(rng, size, self.max_bid)

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha, "max_bid": self.max_bid,
                "win_curve": self.win_curve.to_dict()}

    def __repr__(self):
        return f"ScaledFirstPrice(alpha={self.alpha:g}, {self.win_curve}, max_bid={self.max_bid:g})"


class UniformCompetitors(BidLandscape):
    """Scaled first price against ``n`` competitors bidding Uniform(0, max_bid)."""

    kind = "uniform_competitors"
    payment_rule = "first_price"

    def __init__(self, n, max_bid, alpha=1.0):
        if int(n) != n or n < 1:
            raise LandscapeError("n must be a positive integer")
        if not (0 < alpha <= 1) or not max_bid > 0:
            raise LandscapeError("uniform_competitors needs alpha in (0,1] and max_bid > 0")
        self.n, self.max_bid, self.alpha = int(n), float(max_bid), float(alpha)
        self._validate_shape()

    def _rho(self, b):
        return (b / self.max_bid) ** self.n

    def _beta(self, b):
        return self.alpha * b

    def closed_form_bids(self, z, max_bid):
        return np.clip(self.n * z / (self.alpha * (self.n + 1)), 0.0, max_bid)

    def sample_market_prices(self, rng, size):
        return self.max_bid * rng.random((size, self.n)).max(axis=1)

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "max_bid": self.max_bid, "alpha": self.alpha}

    def __repr__(self):
        return f"UniformCompetitors(n={self.n}, max_bid={self.max_bid:g}, alpha={self.alpha:g})"


class TabulatedEmpirical(BidLandscape):
    """Piecewise-linear landscape from monotone ``(bid, rho, beta)`` tables.

    ``rho`` doubles as the CDF of the highest competing bid when sampling;
    mass above ``rho[-1]`` is placed at ``max_bid`` (a bid can never win it).
    Payment follows ``payment_rule`` (second price by default).
    """

    kind = "tabulated_empirical"

    def __init__(self, bids, rho, beta, payment_rule="second_price", alpha=1.0):
        bids = np.asarray(bids, dtype=float)
        rho = np.asarray(rho, dtype=float)
        beta = np.asarray(beta, dtype=float)
        if not (bids.ndim == rho.ndim == beta.ndim == 1 and bids.size == rho.size == beta.size):
            raise LandscapeError("bids, rho and beta must be 1-d arrays of equal length")
        if bids.size < 2:
            raise LandscapeError("tables need at least two points")
        if bids[0] != 0.0:
            raise LandscapeError("bid table must start at 0")
        if np.any(np.diff(bids) <= 0):
            raise LandscapeError("bid grid must be strictly increasing")
        if np.any(np.diff(rho) < 0) or rho[0] < 0 or rho[-1] > 1:
            raise LandscapeError("rho table must be non-decreasing within [0, 1]")
        if np.any(np.diff(beta) < 0) or beta[0] < 0:
            raise LandscapeError("beta table must be non-decreasing and non-negative")
        if np.any(beta > bids + 1e-9):
            raise LandscapeError("beta(b) exceeds b in the table")
        if payment_rule not in ("second_price", "first_price"):
            raise LandscapeError(f"unknown payment rule {payment_rule!r}")
        self.bids, self.rho_table, self.beta_table = bids, rho, beta
        self.max_bid = float(bids[-1])
        self.payment_rule = payment_rule
        self.alpha = float(alpha)

    def _rho(self, b):
        return np.interp(b, self.bids, self.rho_table)

    def _beta(self, b):
        return np.interp(b, self.bids, self.beta_table)

    def closed_form_bids(self, z, max_bid):
        # h is a concave-or-linear quadratic on every table segment, so the
        # exact maximizer is the best of the per-segment maximizers.
        knots = self.bids[self.bids < max_bid]
        knots = np.append(knots, max_bid)
        r = self._rho(knots)
        bt = self._beta(knots)
        width = np.diff(knots)
        sr = np.diff(r) / width
        sb = np.diff(bt) / width
        zc = z[:, None] - bt[None, :-1]
        lin = zc * sr[None, :] - sb[None, :] * r[None, :-1]
        quad = -sb * sr
        with np.errstate(divide="ignore", invalid="ignore"):
            t_star = np.where(quad < 0, -lin / (2 * quad), 0.0)
        t_star = np.clip(t_star, 0.0, width[None, :])
        cands = np.stack([np.zeros_like(t_star), t_star,
                          np.broadcast_to(width, t_star.shape)], axis=-1)
        vals = zc[..., None] * r[None, :-1, None] + lin[..., None] * cands \
            + quad[None, :, None] * cands ** 2
        flat = vals.reshape(z.size, -1)
        j = flat.argmax(axis=1)
        seg = j // 3
        return np.minimum(knots[seg] + cands.reshape(z.size, -1)[np.arange(z.size), j], max_bid)

    def sample_market_prices(self, rng, size):
        u = rng.random(size)
        # flat CDF stretches carry no mass, so interp's choice there is moot
        out = np.interp(u, self.rho_table, self.bids)
        out = np.where(u < self.rho_table[0], 0.0, out)
        return np.where(u >= self.rho_table[-1], self.max_bid, out)

    def to_dict(self):
        d = {"kind": self.kind, "bids": self.bids.tolist(),
             "rho": self.rho_table.tolist(), "beta": self.beta_table.tolist()}
        if self.payment_rule != "second_price":
            d["payment"] = self.payment_rule
            d["alpha"] = self.alpha
        return d

    def __repr__(self):
        return f"TabulatedEmpirical({self.bids.size} points, max_bid={self.max_bid:g})"


def beta_curves(a, b, max_bid, bids):
    """``(rho, beta)`` of second-price auctions against ``max_bid * Beta(a, b)``.

    Broadcasts over all arguments. The conditional mean uses
    ``E[M | M <= t] = max_bid * a/(a+b) * I_y(a+1, b) / I_y(a, b)``.
    """
    a, b, max_bid, bids = np.broadcast_arrays(*(np.asarray(v, dtype=float)
                                                for v in (a, b, max_bid, bids)))
    y = bids / max_bid
    both = betainc(np.stack([a, a + 1.0]), np.stack([b, b]), np.stack([y, y]))
    den, num = both[0], both[1]
    scale = max_bid * a / (a + b)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(den > 0, scale * num / den, 0.0)
    return den, np.minimum(beta, bids)


def _golden_max(f, lo, hi, iters=80):
    """Vectorized golden-section search for a maximum on ``[lo, hi]``."""
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc >= fd
        a, b = np.where(left, a, c), np.where(left, d, b)
        c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
        fc, fd = f(c), f(d)
        if np.all(b - a <= 1e-14 * np.maximum(1.0, np.abs(b))):
            break
    return 0.5 * (a + b)


def landscape_from_dict(d):
    d = dict(d)
    d.pop("id", None)
    kind = d.pop("kind")
    if kind == "second_price_beta":
        return SecondPriceBeta(d["a"], d["b"], d["max_bid"])
    if kind == "scaled_first_price":
        return ScaledFirstPrice(d["alpha"], d["win_curve"], d["max_bid"])
    if kind == "uniform_competitors":
        return UniformCompetitors(d["n"], d["max_bid"], d.get("alpha", 1.0))
    if kind == "tabulated_empirical":
        return TabulatedEmpirical(d["bids"], d["rho"], d["beta"],
                                  d.get("payment", "second_price"), d.get("alpha", 1.0))
    raise LandscapeError(f"unknown landscape kind {kind!r}")


# ---------------------------------------------------------------------------
# functional interface

def rho(landscape, b):
    return landscape.rho(b)


def beta_pay(landscape, b):
    return landscape.beta(b)


def h(landscape, z, b):
    return landscape.h(z, b)


def optimal_bid(landscape, z, max_bid=None, method="auto", grid_size=GRID_SIZE):
    """Scalar convenience wrapper: returns ``(b_star, h_star)`` as floats."""
    b, v = landscape.optimal_bids(np.array([float(z)]), max_bid, method, grid_size)
    return float(b[0]), float(v[0])


@dataclass
class ConditionReport:
    rho_strictly_increasing: bool
    g_strictly_increasing: bool
    grid_used: int
    rho_witnesses: list
    g_witnesses: list
    unresolved: list = field(default_factory=list)  # segments where rho is saturated

    @property
    def witnesses(self):
        return sorted(set(self.rho_witnesses) | set(self.g_witnesses))

    @property
    def passed(self):
        return self.rho_strictly_increasing and self.g_strictly_increasing


SATURATION = 1e-12


def check_theorem_conditions(landscape, grid_size=GRID_SIZE, max_bid=None):
    """Grid check that rho strictly increases and g = (rho*beta)'/rho' does too.

    Works with secant slopes on each grid segment: rho must rise on every
    segment, and the ratio of the rise in expected payment ``rho*beta`` to
    the rise in ``rho`` must increase from segment to segment. Segments where
    rho sits within 1e-12 of 0 or 1 at both ends cannot be resolved in double
    precision; they are listed in ``unresolved`` and skipped. Witnesses are
    the left ends of offending segments.
    """
    if grid_size < 16:
        raise ValueError("grid_size must be at least 16")
    top = landscape.max_bid if max_bid is None else min(max_bid, landscape.max_bid)
    grid = np.linspace(0.0, top, grid_size)
    r = landscape.rho(grid)
    paid = r * landscape.beta(grid)
    d_rho = np.diff(r)
    d_paid = np.diff(paid)
    lo, hi = r[:-1], r[1:]
    saturated = ((hi <= SATURATION) | (lo >= 1.0 - SATURATION)) & (d_rho <= SATURATION)
    rho_bad = (d_rho <= 0) & ~saturated
    usable = (d_rho > SATURATION) & ~saturated
    with np.errstate(divide="ignore", invalid="ignore"):
        g = d_paid / d_rho
    idx = np.flatnonzero(usable)
    g_bad = np.zeros(d_rho.size, dtype=bool)
    if idx.size > 1:
        # only neighbouring usable segments are compared
        adjacent = np.diff(idx) == 1
        falls = np.diff(g[idx]) <= 0
        g_bad[idx[1:][adjacent & falls]] = True
    g_bad |= rho_bad
    return ConditionReport(
        rho_strictly_increasing=not rho_bad.any(),
        g_strictly_increasing=not g_bad.any(),
        grid_used=grid_size,
        rho_witnesses=grid[:-1][rho_bad].tolist(),
        g_witnesses=grid[:-1][g_bad].tolist(),
        unresolved=grid[:-1][saturated].tolist(),
    )


@dataclass
class BetaCurve:
    """Monte-Carlo estimate of ``E[M | M <= b]`` on a bid grid."""
    bids: np.ndarray
    beta: np.ndarray
    empty: np.ndarray  # True where no sample was at or below the bid


def monte_carlo_beta(samples, b_grid):
    samples = np.sort(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise EstimationError("no winning-price samples")
    if samples.size < 1000:
        warnings.warn(f"only {samples.size} samples for the Monte-Carlo beta curve")
    b_grid = np.asarray(b_grid, dtype=float)
    counts = np.searchsorted(samples, b_grid, side="right")
    csum = np.r_[0.0, np.cumsum(samples)]
    empty = counts == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        est = np.where(empty, 0.0, csum[counts] / np.maximum(counts, 1))
    est = np.maximum.accumulate(est)
    return BetaCurve(b_grid, est, empty)
