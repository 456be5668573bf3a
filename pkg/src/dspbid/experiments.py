"""Budget and penalty sweeps comparing the planned policy against greedy."""
from __future__ import annotations

import dataclasses
import logging

import numpy as np
from scipy import stats

from .dual import SolveConfig
from .recovery import two_phase
from .simulator import SimConfig, run_greedy, run_two_phase
from .utility import BudgetCap, QuadraticTarget

log = logging.getLogger(__name__)

BUDGET_FRACTIONS = (1 / 32, 1 / 8, 1 / 4, 1 / 2, 1.0)
PENALTY_MULTIPLIERS = tuple(round(0.1 + 0.2 * j, 1) for j in range(11))


def _ratio(a, b):
    return a / b if b != 0 else float("nan")


def _rank_corr(a, b):
    """Spearman correlation; nan when either side is constant."""
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return float("nan")
    return float(stats.spearmanr(a, b).statistic)


def _planned(instance, config, solve_config, recovery_config):
    tp = two_phase(instance, solve_config or SolveConfig(), recovery_config)
    if tp.plan is None:
        raise RuntimeError(f"recovery failed: {tp.recovery.message or tp.status}")
    sim = run_two_phase(instance, tp.plan, None, dataclasses.replace(config, budget_fraction=1.0,
                                                                     policy="two_phase"))
    return tp, sim


def experiment_budget_sweep(instance, fractions=BUDGET_FRACTIONS, config=None,
                            solve_config=None, recovery_config=None):
    """Two-phase against greedy with every budget scaled by each fraction.

    Both policies replay the same streams and uniforms. Returns one dict per
    fraction; ``p_value`` is Welch's one-sided test of two-phase profit
    exceeding greedy profit.
    """
    fractions = list(fractions)
    if not fractions:
        raise ValueError("fractions must be non-empty")
    cfg = config or SimConfig()
    rows = []
    for f in fractions:
        scaled = instance.with_budgets(instance.budgets * f)
        tp, planned = _planned(scaled, cfg, solve_config, recovery_config)
        greedy = run_greedy(scaled, None, dataclasses.replace(cfg, budget_fraction=1.0,
                                                              policy="greedy"))
        if cfg.replications > 1:
            test = stats.ttest_ind(planned.profit, greedy.profit, equal_var=False,
                                   alternative="greater")
            p = float(test.pvalue)
        else:
            p = float("nan")
        rows.append({"fraction": f,
                     "two_phase_profit": planned.mean_profit, "greedy_profit": greedy.mean_profit,
                     "relative_profit": _ratio(planned.mean_profit, greedy.mean_profit),
                     "two_phase_bu": planned.mean_bu, "greedy_bu": greedy.mean_bu,
                     "relative_bu": _ratio(planned.mean_bu, greedy.mean_bu),
                     "p_value": p, "Q_best": tp.q_best, "F_recovered": tp.f_recovered})
        log.info("fraction %g: relative profit %.3f", f, rows[-1]["relative_profit"])
    return rows


def with_penalty(instance, multiplier):
    """Every campaign gets ``QuadraticTarget`` with ``tau_k = multiplier / m_k``."""
    utils = []
    for m in instance.budgets:
        tau = multiplier / m if m > 0 else 0.0
        utils.append(QuadraticTarget(float(m), float(tau)))
    return instance.with_utilities(utils)


def experiment_penalty_sweep(instance, multipliers=PENALTY_MULTIPLIERS, config=None,
                             solve_config=None, recovery_config=None):
    """Planned policy with quadratic spend targets, relative to plain budget caps.

    Budgets are first scaled by ``config.budget_fraction``. Returns one dict
    per multiplier plus the Spearman correlations of the multiplier with mean
    budget utilization and with mean profit.
    """
    multipliers = list(multipliers)
    if not multipliers:
        raise ValueError("multipliers must be non-empty")
    cfg = config or SimConfig()
    base = instance.with_budgets(instance.budgets * cfg.budget_fraction)
    capped = base.with_utilities([BudgetCap(float(m)) for m in base.budgets])
    _, ref = _planned(capped, cfg, solve_config, recovery_config)
    rows = []
    for mult in multipliers:
        tp, sim = _planned(with_penalty(base, mult), cfg, solve_config, recovery_config)
        rows.append({"multiplier": mult, "profit": sim.mean_profit, "bu": sim.mean_bu,
                     "relative_profit": _ratio(sim.mean_profit, ref.mean_profit),
                     "relative_bu": _ratio(sim.mean_bu, ref.mean_bu),
                     "Q_best": tp.q_best, "F_recovered": tp.f_recovered})
    summary = {"reference_profit": ref.mean_profit, "reference_bu": ref.mean_bu}
    if len(rows) > 2:
        m = np.array(multipliers)
        summary["rank_corr_bu"] = _rank_corr(m, [r["bu"] for r in rows])
        summary["rank_corr_profit"] = _rank_corr(m, [r["profit"] for r in rows])
    return rows, summary
