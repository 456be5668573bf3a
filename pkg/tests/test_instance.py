import json
import math
from importlib import resources

import jsonschema
import numpy as np
import pytest
from hypothesis import given, strategies as st

from dspbid import (BudgetCap, Campaign, ConfigurationError, Edge, ImpressionType, Instance, Plan,
                    QuadraticTarget, ScaledFirstPrice, SecondPriceBeta, SpendRange,
                    TabulatedEmpirical, UniformCompetitors, WinCurve, expected_profit,
                    expected_spend, load_instance, objective, plan_violations, save_instance,
                    validate)
from dspbid.synthetic import random_instance

from conftest import one_by_one


def _schema():
    return json.loads(resources.files("dspbid").joinpath("schema/instance.schema.json").read_text())


def _rich_instance():
    lands = {"sp": SecondPriceBeta(2.0, 3.0, 1.0),
             "uc": UniformCompetitors(2, 1.5, 0.9),
             "fp": ScaledFirstPrice(0.8, WinCurve("power", {"n": 2}), 1.0),
             "tab": TabulatedEmpirical([0, 0.5, 1.0], [0, 0.4, 1.0], [0, 0.2, 0.45])}
    types = [ImpressionType(f"t{j}", 100.0 + j, 1.0, lid) for j, lid in enumerate(lands)]
    camps = [Campaign("a", 2.0, BudgetCap(10.0)), Campaign("b", 1.0, QuadraticTarget(5.0, 0.2)),
             Campaign("c", 3.0, SpendRange(8.0, 0.25))]
    edges = [Edge("t0", "a", 0.1), Edge("t0", "b", 0.2), Edge("t1", "c", 0.05),
             Edge("t2", "a", 0.3), Edge("t3", "b", 0.1), Edge("t3", "c", 0.15)]
    return Instance(types, camps, edges, lands)


def test_worked_spend_and_profit(one):
    plan = Plan(np.ones(1), np.full(1, 0.5))
    # rho(0.5) = 0.5 under uniform prices; r = 5 * 0.1
    assert expected_spend(one, plan)[0] == pytest.approx(25.0)
    assert expected_profit(one, plan) == pytest.approx(12.5)
    assert objective(one, plan) == -math.inf  # spend 25 is over the budget of 5
    assert objective(one.with_budgets([30.0]), plan) == pytest.approx(12.5)


def test_objective_adds_utility():
    inst = one_by_one(QuadraticTarget(30.0, 0.1))
    plan = Plan(np.ones(1), np.full(1, 0.5))
    assert objective(inst, plan) == pytest.approx(12.5 - 0.05 * 25.0)


def test_revenue_defaults_to_cpc_times_ctr(one):
    assert one.revenue[0] == pytest.approx(0.5)
    assert validate(one) == []


def test_validation_finds_every_problem():
    inst = Instance([ImpressionType("i", -1.0, 0.0, "missing")],
                    [Campaign("c", -1.0, BudgetCap(0.0)), Campaign("lonely", 1.0, BudgetCap(1.0))],
                    [Edge("i", "c", 1.5, 0.2), Edge("i", "c", 0.5), Edge("ghost", "c", 0.1)], {})
    rules = {v.rule for v in validate(inst)}
    assert {"supply", "max_bid", "landscape_id", "budget", "cpc", "endpoint", "ctr",
            "revenue_identity", "unique_pair", "isolated_campaign"} <= rules
    warn = [v for v in validate(inst) if v.rule == "isolated_campaign"]
    assert warn and warn[0].severity == "warning"
    with pytest.raises(ConfigurationError):
        inst.require_consistent()


def test_landscape_domain_must_cover_max_bid():
    inst = Instance([ImpressionType("i", 1.0, 2.0, "L")], [Campaign("c", 1.0, BudgetCap(1.0))],
                    [Edge("i", "c", 0.1)], {"L": SecondPriceBeta(1, 1, 1.0)})
    assert [v.rule for v in validate(inst)] == ["landscape_domain"]


def test_json_round_trip(tmp_path):
    inst = _rich_instance()
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    back = load_instance(path)
    assert back.to_dict() == inst.to_dict()
    jsonschema.validate(json.loads(path.read_text()), _schema())


def test_schema_rejects_malformed():
    bad = _rich_instance().to_dict()
    bad["landscapes"][0]["kind"] = "third_price"
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(bad, _schema())


def test_budget_mismatch_is_rejected():
    d = one_by_one().to_dict()
    d["campaigns"][0]["budget"] = 7.0
    with pytest.raises(ConfigurationError):
        Instance.from_dict(d)


def test_adjacency_sets():
    inst = _rich_instance()
    assert inst.campaigns_of("t0") == ["a", "b"]
    assert inst.types_of("c") == ["t1", "t3"]


def test_per_type_argmax_ties_go_to_lowest_campaign():
    inst = _rich_instance()
    vals = np.array([1.0, 1.0, 0.5, 2.0, 3.0, 3.0])
    best = inst.per_type_argmax(vals)
    assert best.tolist() == [0, 2, 3, 4]


@given(st.integers(0, 10_000))
def test_per_type_argmax_matches_loop(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 4, 3)
    vals = rng.integers(0, 3, inst.n_edges).astype(float)
    best = inst.per_type_argmax(vals)
    for i, idx in enumerate(inst.type_edges):
        ks = inst.edge_campaign[idx]
        order = np.argsort(ks)
        j = idx[order][np.argmax(vals[idx][order])]
        assert best[i] == j


def test_edge_curves_match_landscapes():
    inst = _rich_instance()
    b = np.linspace(0.1, 0.9, inst.n_edges)
    r, bt = inst.edge_curves(b)
    for e in range(inst.n_edges):
        land = inst.landscape(inst.edge_type[e])
        assert r[e] == pytest.approx(float(land.rho(b[e])))
        assert bt[e] == pytest.approx(float(land.beta(b[e])))
    with pytest.raises(ValueError):
        inst.edge_curves(np.full(inst.n_edges, 5.0))


def test_plan_violations_and_records():
    inst = _rich_instance()
    plan = Plan(np.full(inst.n_edges, 0.6), np.full(inst.n_edges, 0.5))
    rules = {v.rule for v in plan_violations(inst, plan)}
    assert rules == {"simplex"}
    back = Plan.from_records(inst, plan.to_records(inst))
    np.testing.assert_array_equal(back.x, plan.x)
    with pytest.raises(ConfigurationError):
        Plan.from_records(inst, [{"impression_id": "t9", "campaign_id": "a", "x": 1, "bid": 0}])


def test_with_copies_leave_original_alone(one):
    two = one.with_budgets([9.0]).with_supplies([3.0])
    assert one.budgets[0] == 5.0 and one.supply[0] == 100.0
    assert two.budgets[0] == 9.0 and two.supply[0] == 3.0
