"""Planned bidding against greedy bidding as budgets shrink.

A desk-sized synthetic market (4 campaigns, 23 impression types, 43 edges)
is replayed under both policies with common random numbers. Greedy bids
each impression's full value for the best-paying campaign and so burns
small budgets on expensive impressions; the planned policy shades bids.
"""
import sys

from dspbid import SimConfig
from dspbid.experiments import BUDGET_FRACTIONS, experiment_budget_sweep
from dspbid.synthetic import market_instance

replications = int(sys.argv[1]) if len(sys.argv) > 1 else 30
inst = market_instance(seed=0)
print(inst)
rows = experiment_budget_sweep(inst, BUDGET_FRACTIONS, SimConfig(seed=0, replications=replications))

print(f"{'fraction':>9} {'planned':>10} {'greedy':>10} {'ratio':>7} {'b.u. ratio':>10} {'p':>9}")
for r in rows:
    print(f"{r['fraction']:9.4g} {r['two_phase_profit']:10.2f} {r['greedy_profit']:10.2f} "
          f"{r['relative_profit']:7.3f} {r['relative_bu']:10.3f} {r['p_value']:9.2g}")
