"""
Construction constants and the distortion function eta
"""

import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from qsmetric.constants import EtaCurve, constants, continuity_modulus, eta_bound
from qsmetric.errors import DomainError
from qsmetric.weights import Params


def test_reference_constants(params_8):
    c = constants(params_8)
    assert c.R == 40
    assert c.C1 == Fraction(51200, 3)
    assert c.C2 == Fraction(40**34 - 1, 39)
    assert c.log10_C1 == pytest.approx(math.log10(51200 / 3))
    assert c.log10_C2 == pytest.approx(34 * math.log10(40) - math.log10(39), abs=1e-9)


def test_constants_record_is_json_friendly(params_8):
    record = constants(params_8).as_dict()
    assert record["C1"] == "51200/3"
    assert record["R"] == "40"


def test_continuity_modulus_decreases(params_8):
    values = [continuity_modulus(params_8, k) for k in range(8)]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[1] - values[0] == pytest.approx(math.log10(5 / 8))


def test_continuity_modulus_negative_level(params_8):
    with pytest.raises(DomainError):
        continuity_modulus(params_8, -1)


def test_eta_decreases_to_zero(params_8):
    eta = EtaCurve(params_8)
    values = [eta.log10_eta(10.0**-e) for e in range(1, 13)]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert eta.log10_eta(1e-300) < values[-1]


def test_eta_branches_meet_at_t_star(params_8):
    eta = EtaCurve(params_8)
    assert eta.t_star == Fraction(1, 32)
    assert eta.log10_eta(eta.t_star) == pytest.approx(eta.log10_prefactor)


def test_eta_rejects_nonpositive(params_8):
    with pytest.raises(DomainError):
        eta_bound(params_8, 0)
    with pytest.raises(DomainError):
        eta_bound(params_8, -1.0)


def test_eta_overflows_to_inf(params_8):
    assert eta_bound(params_8, 1e200) == math.inf


@given(st.floats(1e-12, 1e3), st.floats(1e-12, 1e3))
def test_eta_nondecreasing(s, t):
    eta = EtaCurve(Params(n=2, M=8, L=Fraction(8)))
    low, high = sorted((s, t))
    assert eta.log10_eta(low) <= eta.log10_eta(high) + 1e-12
