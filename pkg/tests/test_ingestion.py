import numpy as np
import pytest

from dspbid import (EstimationError, LogRecord, SecondPriceBeta, TabulatedEmpirical,
                    build_instance, count_supply, fit_beta_landscape, fit_ctr, read_log,
                    validate, write_log)
from dspbid.instance import ConfigurationError
from dspbid.synthetic import market_instance, synthetic_log

from conftest import one_by_one


def _records(rows):
    return [LogRecord(*r) for r in rows]


def test_method_of_moments_recovers_beta():
    rng = np.random.default_rng(1)
    fit = fit_beta_landscape(2.0 * rng.beta(2, 5, 100_000), 2.0)
    assert fit.method == "moments"
    assert 1.9 <= fit.a <= 2.1 and 4.8 <= fit.b <= 5.2


def test_uniform_prices_fit_flat_beta():
    fit = fit_beta_landscape(np.random.default_rng(2).uniform(0, 1, 100_000), 1.0)
    assert fit.a == pytest.approx(1.0, abs=0.03) and fit.b == pytest.approx(1.0, abs=0.03)


def test_fitted_win_curve_is_close_in_sup_norm():
    true = SecondPriceBeta(2.5, 3.0, 1.0)
    prices = true.sample_market_prices(np.random.default_rng(3), 100_000)
    fit = fit_beta_landscape(prices, 1.0)
    b = np.linspace(0, 1, 1001)
    assert np.max(np.abs(fit.landscape.rho(b) - true.rho(b))) <= 0.02


@pytest.mark.filterwarnings("ignore:only")
def test_fallbacks_and_errors():
    fit = fit_beta_landscape(np.full(200, 0.4), 1.0)
    assert fit.method == "tabulated" and isinstance(fit.landscape, TabulatedEmpirical)
    # two-point mass at the ends: variance too large for any Beta law
    fit = fit_beta_landscape(np.r_[np.full(100, 1e-6), np.full(100, 1.0)], 1.0)
    assert fit.method == "tabulated"
    with pytest.raises(EstimationError):
        fit_beta_landscape(np.full(10, 0.5), 1.0)
    with pytest.raises(EstimationError):
        fit_beta_landscape(np.full(200, 1.5), 1.0)


def test_fit_ctr_and_pooled_fallback():
    rows = [("a", "c", 0.1, j < 3, "train") for j in range(10)]
    rows += [("b", "c", 0.1, False, "train") for _ in range(2)]
    rows += [("a", "c", 0.1, True, "test")]
    ctr = fit_ctr(_records(rows), min_count=5)
    assert ctr[("a", "c")] == pytest.approx(0.3)
    assert ctr[("b", "c")] == pytest.approx(3 / 12)  # pooled over campaign c
    with pytest.warns(UserWarning):
        fit_ctr(_records([("a", "c", 0.1, False, "train")]))
    with pytest.raises(EstimationError):
        fit_ctr([])


def test_count_supply():
    rows = [("a", "c", 0.1, False, "test"), ("a", "d", 0.1, False, "test"),
            ("b", "c", 0.1, False, "train")]
    assert count_supply(_records(rows)) == {"a": 2}
    assert count_supply(_records(rows), known=["a", "b"]) == {"a": 2, "b": 0}
    with pytest.warns(UserWarning):
        count_supply(_records(rows), known=["b"])


def test_record_validation():
    with pytest.raises(ValueError):
        LogRecord("", "c", 0.1, False)
    with pytest.raises(ValueError):
        LogRecord("a", "c", -0.1, False)
    with pytest.raises(ValueError):
        LogRecord("a", "c", 0.1, False, "dev")


def test_log_io_round_trip(tmp_path):
    recs = synthetic_log(one_by_one(supply=30.0), seed=4)
    path = tmp_path / "log.tsv"
    write_log(recs, path)
    assert read_log(path) == recs


@pytest.mark.parametrize("text,where", [
    ("bad header\n", "header"),
    ("impression_key\tcampaign_key\tpaying_price\tclicked\tsplit\na\tc\t0.1\t1\n", "line 2"),
    ("impression_key\tcampaign_key\tpaying_price\tclicked\tsplit\na\tc\tx\t1\ttrain\n", "line 2"),
    ("impression_key\tcampaign_key\tpaying_price\tclicked\tsplit\n\na\tc\t0.1\tmaybe\ttrain\n",
     "line 3"),
])
def test_read_log_errors(tmp_path, text, where):
    path = tmp_path / "bad.tsv"
    path.write_text(text)
    with pytest.raises(ValueError, match=where):
        read_log(path)


@pytest.fixture(scope="module")
def market_log():
    inst = market_instance(0)
    return inst, synthetic_log(inst, seed=1)


@pytest.mark.filterwarnings("ignore:impression type", "ignore:only")
def test_market_log_builds_expected_shape(market_log):
    inst, recs = market_log
    built = build_instance(recs, mc_samples=20_000)
    assert (built.n_types, built.n_campaigns, built.n_edges) == (23, 4, 43)
    assert [v for v in validate(built) if v.severity == "error"] == []
    # supplies are counted on the test split, budgets default to test spend
    supply = {t.id: t.supply for t in built.impression_types}
    for t in inst.impression_types:
        assert supply[t.id] == t.supply
    spend = {}
    for r in recs:
        if r.split == "test":
            spend[r.campaign_key] = spend.get(r.campaign_key, 0.0) + r.paying_price
    for c in built.campaigns:
        assert c.budget == pytest.approx(spend[c.id])


@pytest.mark.filterwarnings("ignore:impression type", "ignore:only")
def test_build_is_deterministic_and_order_invariant(market_log):
    _, recs = market_log
    few = recs[:6000]
    a = build_instance(few, mc_samples=5000, seed=3)
    b = build_instance(list(reversed(few)), mc_samples=5000, seed=3)
    assert a.to_dict() == b.to_dict()


@pytest.mark.filterwarnings("ignore:impression type", "ignore:only")
def test_build_options():
    inst = one_by_one(supply=400.0)
    recs = synthetic_log(inst, seed=2)
    built = build_instance(recs, budgets={"c1": 9.0}, cpcs={"c1": 5.0},
                           utilities={"c1": {"kind": "quadratic_target", "tau": 0.1}},
                           max_bids={"i1": 1.0}, mc_samples=5000)
    c = built.campaigns[0]
    assert c.budget == 9.0 and c.cpc == 5.0 and c.utility.tau == 0.1
    assert built.impression_types[0].max_bid == 1.0
    with pytest.raises(ConfigurationError):
        build_instance(recs, budgets={"nope": 1.0}, mc_samples=5000)
    with pytest.raises(EstimationError):
        build_instance([r for r in recs if r.split == "test"])


@pytest.mark.filterwarnings("ignore:impression type", "ignore:only")
def test_sparse_types_use_empirical_fallback():
    inst = one_by_one(supply=40.0)
    recs = synthetic_log(inst, seed=5)
    with pytest.warns(UserWarning, match="empirical"):
        built = build_instance(recs, mc_samples=2000)
    assert isinstance(built.landscape(0), TabulatedEmpirical)
