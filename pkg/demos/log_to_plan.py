"""From an auction log to a plan, and the penalty trade-off.

A log is drawn from a known market, an instance is fitted back from it,
and the plan solved on the fitted instance is replayed on the true one.
Quadratic spend targets then trade profit for budget utilization.
"""
import warnings

import numpy as np

from dspbid import SimConfig, build_instance, run_two_phase, two_phase
from dspbid.experiments import experiment_penalty_sweep
from dspbid.synthetic import market_instance, synthetic_log

truth = market_instance(seed=4, events=20_000)
records = synthetic_log(truth, seed=4)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")  # sparse types fall back to tabulated curves
    fitted = build_instance(records, budgets={c.id: c.budget for c in truth.campaigns},
                            cpcs={c.id: c.cpc for c in truth.campaigns},
                            max_bids={t.id: t.max_bid for t in truth.impression_types},
                            mc_samples=20_000)
print(f"true {truth}, fitted {fitted}")

# fitted edges come out sorted by id; line them up with the true instance
order = {(e.impression_id, e.campaign_id): n for n, e in enumerate(fitted.edges)}
idx = np.array([order[(e.impression_id, e.campaign_id)] for e in truth.edges])
tp = two_phase(fitted)
print(f"fitted plan: Q = {tp.q_best:.2f}, F = {tp.f_recovered:.2f}")
plan = type(tp.plan)(tp.plan.x[idx], tp.plan.b[idx])
rep = run_two_phase(truth, plan, None, SimConfig(seed=0, replications=20))
print(f"replayed on the true market: profit {rep.mean_profit:.2f}, b.u. {rep.mean_bu:.3f}")

rows, summary = experiment_penalty_sweep(truth, [0.1, 0.5, 1.1, 2.1],
                                         SimConfig(seed=0, replications=20, budget_fraction=2.0))
for r in rows:
    print(f"tau multiplier {r['multiplier']:.1f}: profit x{r['relative_profit']:.3f}, "
          f"b.u. x{r['relative_bu']:.3f}")
print(f"rank correlation with b.u. {summary['rank_corr_bu']:+.2f}, "
      f"with profit {summary['rank_corr_profit']:+.2f}")
