"""
Dimension planning and the content chain of the sets F_m
"""

import numpy as np
import pytest

from qsmetric.config import ARITY_GRID
from qsmetric.dimension import (
    choose_parameters,
    content_checks,
    content_table,
    lemma_limit_series,
    make_plan,
)
from qsmetric.errors import DomainError
from qsmetric.weights import Params


@pytest.fixture
def plan_16():
    return make_plan(Params.from_beta(2, 16, 3), 1.1)


def test_reference_plan_alpha_one():
    plan = make_plan(Params.from_beta(2, 16, 3), 1.0)
    assert plan.feasible
    assert float(plan.rho_star) == pytest.approx(0.5005, abs=5e-4)
    assert float(16 * plan.mu) == pytest.approx(0.250, abs=1e-3)


def test_reference_plan_alpha_one_point_one(plan_16):
    assert plan_16.feasible
    assert float(plan_16.rho_star) == pytest.approx(0.268, abs=1e-3)


def test_infeasible_plan_names_failed_checks(params_8):
    plan = make_plan(params_8, 1.1)
    assert not plan.feasible
    assert plan.status.startswith("infeasible")
    assert "rho_star_below_one" in plan.status


def test_alpha_out_of_range(params_8):
    with pytest.raises(DomainError):
        make_plan(params_8, 2.0)
    with pytest.raises(DomainError):
        choose_parameters(2, 2.5)


def test_choose_parameters_skips_inadmissible_rungs():
    plan = choose_parameters(2, 1.0)
    assert plan.feasible
    assert plan.params.beta == 3
    assert plan.params.M == 16


def test_choose_parameters_three_dimensions():
    plan = choose_parameters(3, 2.0)
    assert plan is not None
    assert plan.feasible
    assert 2.0 > 3 / (1 + float(plan.params.beta))


def test_content_table_rejects_infeasible(params_8):
    with pytest.raises(DomainError):
        content_table(make_plan(params_8, 1.1), [1], samples=100, seed=1)


def test_content_chain(plan_16):
    table = content_table(plan_16, range(1, 4), samples=500, seed=1, m_empirical=2, max_level=2**14)
    assert list(table["m"]) == [1, 2, 3]
    assert table["log10_empirical_content"].isna().tolist() == [False, False, True]
    checks = content_checks(plan_16, table)
    assert all(checks.values()), checks
    assert set(plan_16.k_m) == {1, 2, 3}
    steps = np.diff(table["log10_analytic_bound"])
    assert steps == pytest.approx([float(np.log10(float(plan_16.rho_star)))] * 2)


def test_k1_reaches_half(plan_16):
    table = content_table(plan_16, [1], samples=2000, seed=1, max_level=2**10)
    assert bool(table["k_m_found"].iloc[0])
    assert table["ci_low"].iloc[0] >= 0.5


def test_plan_record(plan_16):
    record = plan_16.to_record()
    assert record["status"] == "feasible"
    assert record["params"]["beta"] == "3"
    assert set(record["checks"]) == {
        "alpha_in_range",
        "mu_below_one",
        "content_ratio_below_2^-alpha",
        "rho_star_below_one",
    }


def test_lemma_limit_series_decreases():
    series = lemma_limit_series(2, 1.1, 3, ARITY_GRID)
    assert list(series["M"]) == list(ARITY_GRID)
    assert (np.diff(series["log10_value"]) < 0).all()
    assert series["asymptotic_exponent"].iloc[0] == pytest.approx(2 - 1.1 * 4)
