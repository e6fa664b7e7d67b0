"""
Run configuration parsing and validation
"""

import json

import pytest

from qsmetric.config import BudgetConfig, load_run_config, parse_run_config
from qsmetric.errors import ConfigError


def test_defaults_filled():
    config = parse_run_config('{"params": {"n": 2, "M": 8, "L": 8}}')
    assert config.experiment == "all"
    assert config.sampling.seed == 1
    assert config.budgets == BudgetConfig()
    dumped = config.model_dump(mode="json")
    assert dumped["params"]["capped"] is False
    assert dumped["walk"] == {"walks": 100_000, "horizon": 10_000}


def test_rational_l_and_beta():
    assert parse_run_config('{"params": {"n": 2, "M": 8, "L": "17/2"}}').params.L == "17/2"
    assert parse_run_config('{"params": {"n": 2, "M": 16, "beta": 3}}').params.beta == 3


def test_missing_arity_reports_field():
    with pytest.raises(ConfigError) as info:
        parse_run_config('{"params": {"n": 2, "L": 8}}')
    assert any(d["field"] == "params.M" for d in info.value.diagnostics)


def test_l_and_beta_are_exclusive():
    with pytest.raises(ConfigError):
        parse_run_config('{"params": {"n": 2, "M": 8, "L": 8, "beta": 1}}')
    with pytest.raises(ConfigError):
        parse_run_config('{"params": {"n": 2, "M": 8}}')


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError) as info:
        parse_run_config('{"params": {"n": 2, "M": 8, "L": 8}, "sampling": {"sed": 3}}')
    assert "sampling.sed" in str(info.value)


def test_malformed_json_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_run_config('{\n  "params": {\n}')
    assert info.value.diagnostics[0]["line"] >= 1


def test_seed_range():
    with pytest.raises(ConfigError):
        parse_run_config(json.dumps({"params": {"n": 2, "M": 8, "L": 8}, "sampling": {"seed": 2**64}}))


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "absent.json"))


@pytest.mark.parametrize("alpha", [2, 2.5])
def test_alpha_must_stay_below_dimension(alpha):
    with pytest.raises(ConfigError) as info:
        parse_run_config(json.dumps({"params": {"n": 2, "M": 8, "L": 8}, "dimension": {"alpha": alpha}}))
    assert "dimension.alpha" in str(info.value)
    assert parse_run_config(
        json.dumps({"params": {"n": 3, "M": 8, "L": 8}, "dimension": {"alpha": alpha}})
    ).dimension.alpha == alpha
