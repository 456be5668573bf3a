"""Budget-spending utilities and their convex conjugates.

A utility ``u(v)`` scores a campaign's expected spend ``v``. The dual uses
``p(lam) = sup_v {lam * v + u(v)}`` and one of its subgradients, which for
all kinds below is the maximizing spend ``v*``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NEG_INF = -math.inf


class UtilityDomainError(ValueError):
    pass


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True)
class BudgetCap:
    """0 while spend stays within budget, -inf beyond it."""
    budget: float
    kind = "budget_cap"

    def __post_init__(self):
        if not self.budget >= 0:
            raise ValueError("budget must be non-negative")

    def u(self, v):
        return 0.0 if v <= self.budget else NEG_INF

    def conjugate(self, lam):
        return _out(self.budget * np.maximum(lam, 0.0))

    def conjugate_subgradient(self, lam):
        # right-limit selection at the kink lam = 0
        return _out(np.where(np.asarray(lam) >= 0, self.budget, 0.0))

    def with_budget(self, budget):
        return BudgetCap(budget)

    def to_dict(self):
        return {"kind": self.kind, "budget": self.budget}


@dataclass(frozen=True)
class QuadraticTarget:
    """``-(tau/2)(v - m)^2`` up to the budget, -inf beyond it."""
    budget: float
    tau: float
    kind = "quadratic_target"

    def __post_init__(self):
        if not self.budget >= 0:
            raise ValueError("budget must be non-negative")
        if not self.tau >= 0:
            raise ValueError("tau must be non-negative")

    def u(self, v):
        if v > self.budget:
            return NEG_INF
        return -0.5 * self.tau * (v - self.budget) ** 2

    def conjugate(self, lam):
        lam = np.asarray(lam, dtype=float)
        m, tau = self.budget, self.tau
        if tau == 0:
            return _out(m * np.maximum(lam, 0.0))
        inner = lam * m + lam ** 2 / (2 * tau)
        out = np.where(lam >= 0, lam * m, np.where(lam >= -tau * m, inner, -0.5 * tau * m * m))
        return _out(out)

    def conjugate_subgradient(self, lam):
        lam = np.asarray(lam, dtype=float)
        m, tau = self.budget, self.tau
        if tau == 0:
            return _out(np.where(lam >= 0, m, 0.0))
        with np.errstate(divide="ignore"):
            return _out(np.clip(m + lam / tau, 0.0, m))

    def with_budget(self, budget):
        return QuadraticTarget(budget, self.tau)

    def to_dict(self):
        return {"kind": self.kind, "budget": self.budget, "tau": self.tau}


@dataclass(frozen=True)
class SpendRange:
    """0 when ``alpha_spend * m <= v <= m``, -inf outside."""
    budget: float
    alpha_spend: float
    kind = "spend_range"

    def __post_init__(self):
        if not self.budget >= 0:
            raise ValueError("budget must be non-negative")
        if not 0 <= self.alpha_spend <= 1:
            raise ValueError("alpha_spend must lie in [0, 1]")

    @property
    def floor(self):
        return self.alpha_spend * self.budget

    def u(self, v):
        return 0.0 if self.floor <= v <= self.budget else NEG_INF

    def conjugate(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = np.where(lam >= 0, self.budget * lam, self.floor * lam)
        return _out(out)

    def conjugate_subgradient(self, lam):
        return _out(np.where(np.asarray(lam) >= 0, self.budget, self.floor))

    def with_budget(self, budget):
        return SpendRange(budget, self.alpha_spend)

    def to_dict(self):
        return {"kind": self.kind, "budget": self.budget, "alpha_spend": self.alpha_spend}


UtilitySpec = BudgetCap | QuadraticTarget | SpendRange


def utility_from_dict(d, budget=None):
    kind = d.get("kind", "budget_cap")
    m = d.get("budget", budget)
    if m is None:
        raise ValueError("utility needs a budget")
    if kind == "budget_cap":
        return BudgetCap(m)
    if kind == "quadratic_target":
        return QuadraticTarget(m, d.get("tau", 0.0))
    if kind == "spend_range":
        return SpendRange(m, d.get("alpha_spend", 0.0))
    raise ValueError(f"unknown utility kind {kind!r}")


def u(spec, v):
    if v < 0:
        raise UtilityDomainError("spend must be non-negative")
    return spec.u(v)


def conjugate(spec, lam):
    return spec.conjugate(lam)


def conjugate_subgradient(spec, lam):
    return spec.conjugate_subgradient(lam)


def fenchel_check(spec, v_grid, z_grid):
    """Largest ``|u(v) - min_z (p(z) - z v)|`` over finite-utility ``v``."""
    v_grid = np.asarray(v_grid, dtype=float)
    z_grid = np.asarray(z_grid, dtype=float)
    uv = np.array([spec.u(v) for v in v_grid])
    keep = np.isfinite(uv)
    if not keep.any():
        return 0.0
    v = v_grid[keep]
    p = np.asarray(spec.conjugate(z_grid), dtype=float)
    inner = (p[None, :] - z_grid[None, :] * v[:, None]).min(axis=1)
    return float(np.max(np.abs(uv[keep] - inner)))
