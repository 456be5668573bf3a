"""One impression type, one campaign: the whole pipeline by hand.

Competing prices are uniform on [0, 1] under a second-price auction, so a
bid b wins with probability b and pays b/2 on average. Revenue per won
impression is 0.5, there are 100 impressions and the budget is 5.
"""
import numpy as np

from dspbid import (BudgetCap, Campaign, Edge, ImpressionType, Instance, SecondPriceBeta,
                    SimConfig, eval_Q, minimize_Q, recover, run_greedy, run_two_phase,
                    subgradient)

inst = Instance([ImpressionType("news", 100.0, 1.0, "uniform")],
                [Campaign("shoes", 5.0, BudgetCap(5.0))],
                [Edge("news", "shoes", 0.1)],
                {"uniform": SecondPriceBeta(1.0, 1.0, 1.0)})

# Without a budget price every impression is bought at the truthful bid,
# which would spend 25 against a budget of 5.
ev = eval_Q(inst, np.zeros(1))
print(f"Q(0) = {ev.value:.3f}, bid {ev.b_of_lambda[0]:.3f}, "
      f"subgradient {subgradient(inst, np.zeros(1), ev)[0]:+.1f}")

res = minimize_Q(inst)
print(f"dual minimum Q = {res.q_best:.4f} at price {res.lambda_best[0]:.4f} "
      f"after {res.iterations_used} iterations")

# The price shades the bid to r(1 - lam) = 0.1; at that bid the full
# allocation spends exactly the budget.
rec = recover(inst, res.lambda_best)
print(f"recovered plan x = {rec.plan.x[0]:.4f}, bid = {rec.plan.b[0]:.4f}, "
      f"F = {rec.objective_value:.4f}")

cfg = SimConfig(seed=1, replications=200)
planned = run_two_phase(inst, rec.plan, None, cfg)
greedy = run_greedy(inst, None, cfg)
print(f"simulated profit: planned {planned.mean_profit:.3f}, greedy {greedy.mean_profit:.3f}")
