import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dspbid import (BudgetCap, Campaign, ConfigurationError, Edge, ImpressionEvent,
                    ImpressionType, Instance, Plan, SecondPriceBeta, SimConfig,
                    UniformCompetitors, expected_spend, generate_stream, run_greedy, run_mpc,
                    run_two_phase, two_phase)
from dspbid.simulator import simulate
from dspbid.synthetic import market_instance, random_instance

from conftest import one_by_one


def _plan(inst, x, b):
    return Plan(np.asarray(x, dtype=float), np.asarray(b, dtype=float))


def test_deterministic_for_a_seed():
    inst = market_instance(2, events=2000)
    plan = two_phase(inst).plan
    a = run_two_phase(inst, plan, None, SimConfig(seed=4, replications=5))
    b = run_two_phase(inst, plan, None, SimConfig(seed=4, replications=5))
    c = run_two_phase(inst, plan, None, SimConfig(seed=5, replications=5))
    np.testing.assert_array_equal(a.profit, b.profit)
    np.testing.assert_array_equal(a.spend, b.spend)
    assert not np.array_equal(a.profit, c.profit)


def test_replications_do_not_interact():
    inst = market_instance(2, events=2000)
    plan = two_phase(inst).plan
    few = run_two_phase(inst, plan, None, SimConfig(seed=1, replications=3))
    many = run_two_phase(inst, plan, None, SimConfig(seed=1, replications=7))
    np.testing.assert_array_equal(few.profit, many.profit[:3])
    g_few = run_greedy(inst, None, SimConfig(seed=1, replications=3, policy="greedy"))
    g_many = run_greedy(inst, None, SimConfig(seed=1, replications=7, policy="greedy"))
    np.testing.assert_array_equal(g_few.spend, g_many.spend[:3])


def test_empty_stream(one):
    rep = run_two_phase(one, _plan(one, [1], [0.5]), [], SimConfig(replications=2))
    assert rep.profit.tolist() == [0.0, 0.0]
    assert rep.bids.sum() == 0 and rep.budget_utilization.tolist() == [0.0, 0.0]


def test_win_rate_matches_rho():
    inst = one_by_one(BudgetCap(1e12), supply=100_000.0, cpc=1.0)
    for bid in (0.2, 0.65):
        rep = run_two_phase(inst, _plan(inst, [1], [bid]), None, SimConfig(seed=3, replications=1))
        assert rep.bids[0] == 100_000
        assert rep.wins[0] / rep.bids[0] == pytest.approx(bid, abs=0.01)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.floats(0.01, 2.0))
def test_budgets_and_accounting(seed, fraction):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 3, 2)
    x = np.zeros(inst.n_edges)
    for idx in inst.type_edges:
        x[idx] = rng.dirichlet(np.ones(idx.size + 1))[:-1]
    plan = Plan(x, rng.uniform(0, 1, inst.n_edges) * inst.edge_max_bid)
    cfg = SimConfig(seed=seed, replications=3, budget_fraction=fraction)
    for rep in (run_two_phase(inst, plan, None, cfg), run_greedy(inst, None, cfg)):
        assert np.all(rep.spend >= 0)
        assert np.all(rep.spend <= rep.budgets + 1e-9)
        np.testing.assert_allclose(rep.spend.sum(axis=1), rep.revenue)
        np.testing.assert_allclose(rep.profit, rep.revenue - rep.payments)
        assert np.all(rep.clicks <= rep.wins) and np.all(rep.wins <= rep.bids)
        np.testing.assert_allclose(rep.budgets, inst.budgets * fraction)


def _forced(landscape, cpc=2.0, budget=1e9):
    return Instance([ImpressionType("i", 3.0, 1.0, "L")], [Campaign("c", cpc, BudgetCap(budget))],
                    [Edge("i", "c", 1.0)], {"L": landscape})


def test_second_price_mechanics():
    inst = _forced(SecondPriceBeta(1, 1, 1.0))
    stream = [ImpressionEvent(0, "i", 0.3), ImpressionEvent(5, "i", 0.7), ImpressionEvent(9, "i", 0.5)]
    rep = run_two_phase(inst, _plan(inst, [1], [0.5]), stream, SimConfig(replications=1))
    # wins only at 0.3 (a tie at 0.5 loses); pays the market price, click certain
    assert rep.wins[0] == 1 and rep.clicks[0] == 1
    assert rep.payments[0] == pytest.approx(0.3)
    assert rep.profit[0] == pytest.approx(2.0 - 0.3)


def test_first_price_mechanics():
    inst = _forced(UniformCompetitors(1, 1.0, 0.5))
    stream = [ImpressionEvent(0, "i", 0.3, "first_price", 0.5), ImpressionEvent(1, "i", 0.9)]
    rep = run_two_phase(inst, _plan(inst, [1], [0.6]), stream, SimConfig(replications=1))
    assert rep.wins[0] == 1
    assert rep.payments[0] == pytest.approx(0.3)  # 0.5 * bid


def test_campaign_stops_when_it_cannot_afford_a_click():
    inst = _forced(SecondPriceBeta(1, 1, 1.0), cpc=2.0, budget=5.0)
    stream = [ImpressionEvent(j, "i", 0.1) for j in range(10)]
    rep = run_two_phase(inst, _plan(inst, [1], [0.5]), stream, SimConfig(replications=1))
    assert rep.clicks[0] == 2 and rep.spend[0, 0] == pytest.approx(4.0)
    assert rep.bids[0] == 2


def test_test_ctr_override():
    inst = _forced(SecondPriceBeta(1, 1, 1.0))
    stream = [ImpressionEvent(j, "i", 0.1) for j in range(20)]
    rep = run_two_phase(inst, _plan(inst, [1], [0.5]), stream,
                        SimConfig(replications=1, test_ctr={("i", "c"): 0.0}))
    assert rep.wins[0] == 20 and rep.clicks[0] == 0
    with pytest.raises(ConfigurationError):
        run_two_phase(inst, _plan(inst, [1], [0.5]), stream, SimConfig(test_ctr=np.ones(3)))


def test_stream_validation():
    inst = _forced(SecondPriceBeta(1, 1, 1.0))
    plan = _plan(inst, [1], [0.5])
    with pytest.raises(ConfigurationError):
        run_two_phase(inst, plan, [ImpressionEvent(0, "zzz", 0.1)])
    with pytest.raises(ConfigurationError):
        run_two_phase(inst, plan, [ImpressionEvent(3, "i", 0.1), ImpressionEvent(3, "i", 0.1)])
    with pytest.raises(ConfigurationError):
        run_two_phase(inst, Plan(np.ones(2), np.ones(2)), [])


def test_greedy_prefers_highest_revenue_then_falls_back():
    land = SecondPriceBeta(1, 1, 1.0)
    inst = Instance([ImpressionType("i", 10.0, 1.0, "L")],
                    [Campaign("lo", 1.0, BudgetCap(100.0)), Campaign("hi", 3.0, BudgetCap(6.0))],
                    [Edge("i", "lo", 1.0), Edge("i", "hi", 1.0)], {"L": land})
    stream = [ImpressionEvent(j, "i", 0.01) for j in range(5)]
    rep = run_greedy(inst, stream, SimConfig(replications=1, policy="greedy"))
    # "hi" takes two clicks (6 of budget), then "lo" takes the rest
    assert rep.spend[0].tolist() == pytest.approx([3.0, 6.0])


def test_plan_without_allocation_never_bids(one):
    rep = run_two_phase(one, _plan(one, [0], [0.5]), None, SimConfig(replications=2))
    assert rep.bids.sum() == 0


def test_mean_spend_matches_plan_when_budget_is_slack():
    inst = one_by_one(BudgetCap(1e6))
    plan = _plan(inst, [1.0], [0.5])
    rep = run_two_phase(inst, plan, None, SimConfig(seed=2, replications=400))
    v = expected_spend(inst, plan)[0]
    se = rep.spend[:, 0].std(ddof=1) / np.sqrt(400)
    assert abs(rep.spend[:, 0].mean() - v) <= 3 * se


def test_mpc_without_replans_matches_static():
    inst = market_instance(3, events=1500)
    plan = two_phase(inst).plan
    static = run_two_phase(inst, plan, None, SimConfig(seed=2, replications=3))
    mpc = run_mpc(inst, None, SimConfig(seed=2, replications=3, resolve_every=10_000), plan=plan)
    np.testing.assert_array_equal(static.profit, mpc.profit)
    assert mpc.resolves == 0


def test_mpc_replans_every_period():
    inst = market_instance(3, events=300)
    plan = two_phase(inst).plan
    n = int(np.rint(inst.supply).sum())
    rep = run_mpc(inst, None, SimConfig(seed=2, replications=2, resolve_every=100), plan=plan)
    assert rep.resolves == n // 100
    assert np.all(rep.spend <= rep.budgets + 1e-9)


def test_simulate_dispatch(one):
    plan = _plan(one, [1], [0.5])
    assert simulate(one, plan, SimConfig(policy="greedy", replications=1)).policy == "greedy"
    assert simulate(one, plan, SimConfig(replications=1)).policy == "two_phase"
    with pytest.raises(ConfigurationError):
        run_mpc(one, None, SimConfig())


def test_generate_stream_shape_and_seq(one):
    events = generate_stream(one, seed=1)
    assert len(events) == 100
    assert [e.seq for e in events] == list(range(100))
    assert events == generate_stream(one, seed=1)
    assert all(0 <= e.market_price <= 1 for e in events)


def test_report_rows(one):
    rep = run_two_phase(one, _plan(one, [1], [0.5]), None, SimConfig(replications=3))
    rows = rep.rows()
    assert len(rows) == 4 and rows[-1]["replication"] == "mean"
    assert "spend_c1" in rows[0]
    assert rep.aggregate()["replications"] == 3


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(replications=0)
    with pytest.raises(ValueError):
        SimConfig(policy="random")
    with pytest.raises(ValueError):
        SimConfig(resolve_every=0)
    with pytest.raises(ValueError):
        SimConfig(budget_fraction=0)


def test_second_price_payment_never_exceeds_bid():
    inst = market_instance(5, events=3000)
    plan = two_phase(inst).plan
    rep = run_two_phase(inst, plan, None, SimConfig(seed=1, replications=4))
    # every bid is at most 1, and a win needs the market price below the bid
    assert np.all(rep.payments <= rep.wins * plan.b.max() + 1e-12)


def test_type_without_campaigns_is_ignored():
    land = SecondPriceBeta(1, 1, 1.0)
    inst = Instance([ImpressionType("i", 50.0, 1.0, "L"), ImpressionType("orphan", 50.0, 1.0, "L")],
                    [Campaign("c", 1.0, BudgetCap(1e6))], [Edge("i", "c", 0.5)], {"L": land})
    tp = two_phase(inst)
    assert tp.f_recovered == pytest.approx(tp.q_best)
    rep = run_two_phase(inst, tp.plan, None, SimConfig(replications=2))
    assert np.all(rep.bids == 50)
