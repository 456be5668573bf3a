import numpy as np
import pytest
from hypothesis import settings

from dspbid import (BudgetCap, Campaign, Edge, ImpressionType, Instance, QuadraticTarget,
                    SecondPriceBeta, SpendRange)

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

_ACCEPTANCE = []


def one_by_one(utility=None, supply=100.0, cpc=5.0, ctr=0.1, landscape=None):
    """One type, one campaign: uniform second-price prices on [0, 1]."""
    utility = utility or BudgetCap(5.0)
    return Instance([ImpressionType("i1", supply, 1.0, "L")], [Campaign("c1", cpc, utility)],
                    [Edge("i1", "c1", ctr)], {"L": landscape or SecondPriceBeta(1.0, 1.0, 1.0)})


def mixed_instance(rng, kind):
    """Random 3x2 instance whose campaigns all use utility ``kind``."""
    from dspbid.synthetic import random_instance

    inst = random_instance(rng, 3, 2, 4, budget_scale=(0.3, 0.9))
    utils = []
    for m in inst.budgets:
        if kind == "quadratic_target":
            utils.append(QuadraticTarget(float(m), float(rng.uniform(0.1, 2.0)) / float(m)))
        elif kind == "spend_range":
            utils.append(SpendRange(float(m), float(rng.uniform(0.0, 0.3))))
        else:
            utils.append(BudgetCap(float(m)))
    return inst.with_utilities(utils)


@pytest.fixture
def one():
    return one_by_one()


@pytest.fixture
def acceptance():
    """Record a criterion outcome; every outcome is echoed in the run summary."""
    def record(number, passed, detail):
        line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        print(line)
        _ACCEPTANCE.append(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
