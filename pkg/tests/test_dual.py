import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dspbid import (BudgetCap, Plan, SolveConfig, eval_Q, minimize_Q, objective, psi,
                    subgradient)
from dspbid.synthetic import random_instance

from conftest import mixed_instance, one_by_one


def test_worked_dual_at_zero(one):
    ev = eval_Q(one, np.zeros(1))
    assert ev.b_of_lambda[0] == pytest.approx(0.5)
    assert ev.x_of_lambda[0] == 1.0
    assert ev.value == pytest.approx(12.5)
    assert subgradient(one, np.zeros(1), ev)[0] == pytest.approx(-20.0)


def test_worked_dual_at_optimum(one):
    # z = 0.1: profit (0.1 - 0.05) * 0.1 * 100 = 0.5, conjugate 5 * 0.8 = 4
    ev = eval_Q(one, np.array([0.8]))
    assert ev.value == pytest.approx(4.5)
    assert subgradient(one, np.array([0.8]), ev)[0] == pytest.approx(0.0, abs=1e-12)


def test_prices_above_one_shut_every_edge(one):
    ev = eval_Q(one, np.array([1.5]))
    assert ev.x_of_lambda[0] == 0.0
    assert ev.value == pytest.approx(7.5)


def test_lambda_shape_checked(one):
    with pytest.raises(ValueError):
        eval_Q(one, np.zeros(2))


def test_psi_sums_to_profit_part():
    inst = random_instance(np.random.default_rng(3), 4, 3)
    lam = np.array([0.2, -0.1, 0.6])
    ev = eval_Q(inst, lam)
    total = sum(psi(inst, lam, i) for i in range(inst.n_types))
    assert total == pytest.approx(ev.value - ev.conjugate.sum())


def test_numeric_and_closed_bids_agree():
    inst = random_instance(np.random.default_rng(8), 3, 2)
    lam = np.array([0.3, 0.1])
    assert eval_Q(inst, lam, "numeric").value == pytest.approx(eval_Q(inst, lam).value, rel=1e-9)


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.sampled_from(["budget_cap", "quadratic_target", "spend_range"]))
def test_weak_duality_for_random_plans(seed, kind):
    rng = np.random.default_rng(seed)
    inst = mixed_instance(rng, kind)
    lam = rng.uniform(-2, 2, inst.n_campaigns)
    x = np.zeros(inst.n_edges)
    for idx in inst.type_edges:
        x[idx] = rng.dirichlet(np.ones(idx.size + 1))[:-1] * rng.uniform(0, 0.2)
    plan = Plan(x, rng.uniform(0, 1, inst.n_edges) * inst.edge_max_bid)
    assert objective(inst, plan) <= eval_Q(inst, lam).value + 1e-7


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_subgradient_inequality(seed):
    rng = np.random.default_rng(seed)
    inst = mixed_instance(rng, ["budget_cap", "quadratic_target", "spend_range"][seed % 3])
    lam, lam2 = rng.uniform(-1, 1.5, (2, inst.n_campaigns))
    ev = eval_Q(inst, lam)
    g = subgradient(inst, lam, ev)
    assert eval_Q(inst, lam2).value >= ev.value + g @ (lam2 - lam) - 1e-7 * max(1, abs(ev.value))


def test_dual_value_is_convex_along_a_line():
    inst = random_instance(np.random.default_rng(11), 3, 2)
    a, b = np.array([-0.5, 0.2]), np.array([0.9, 0.7])
    t = np.linspace(0, 1, 41)
    q = np.array([eval_Q(inst, a + s * (b - a)).value for s in t])
    assert np.all(q[1:-1] <= 0.5 * (q[:-2] + q[2:]) + 1e-9)


@pytest.mark.parametrize("rule", ["constant_step_length", "inverse_sqrt", "halving_step_length"])
def test_one_by_one_converges(one, rule):
    res = minimize_Q(one, SolveConfig(step_rule=rule, max_iters=2000))
    assert res.q_best == pytest.approx(4.5, abs=1e-3 * 4.5)
    assert res.lambda_best[0] == pytest.approx(0.8, abs=0.02)


def test_slack_budgets_keep_prices_at_zero():
    inst = random_instance(np.random.default_rng(21), 3, 2)
    slack = inst.with_budgets(inst.budgets * 1e3)
    res = minimize_Q(slack)
    unconstrained = eval_Q(slack, np.zeros(2)).per_edge_profit
    best = slack.per_type_argmax(unconstrained)
    expected = unconstrained[best[best >= 0]].clip(min=0).sum()
    assert np.all(np.abs(res.lambda_best) <= 1e-3)
    assert res.q_best == pytest.approx(expected, rel=1e-6)


def test_history_and_best_are_consistent(one):
    res = minimize_Q(one, SolveConfig(max_iters=50))
    qs = [h[1] for h in res.history]
    assert res.q_best == pytest.approx(min(qs))
    assert res.iterations_used <= 50
    assert len(res.history) == res.iterations_used + 1


def test_zero_iterations_evaluates_start(one):
    res = minimize_Q(one, SolveConfig(max_iters=0))
    assert res.q_best == pytest.approx(12.5)
    np.testing.assert_array_equal(res.lambda_best, [0.0])


def test_averaging_never_worsens_best(one):
    plain = minimize_Q(one, SolveConfig(max_iters=100))
    avg = minimize_Q(one, SolveConfig(max_iters=100, average=True))
    assert avg.q_best <= plain.q_best + 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(step_rule="newton")
    with pytest.raises(ValueError):
        SolveConfig(max_iters=-1)
    with pytest.raises(ValueError):
        SolveConfig(step_scale=0)


def test_determinism():
    inst = random_instance(np.random.default_rng(5), 3, 2)
    a, b = minimize_Q(inst), minimize_Q(inst)
    assert a.q_best == b.q_best
    np.testing.assert_array_equal(a.lambda_best, b.lambda_best)


def test_budget_cap_dual_bounds_unconstrained_profit():
    inst = one_by_one(BudgetCap(1e6))
    assert minimize_Q(inst).q_best == pytest.approx(12.5, rel=1e-9)
