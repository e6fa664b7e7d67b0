"""
Multiplier law, law of large numbers, capped walk and Lipschitz check
"""

import math
from dataclasses import replace
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st
from mpmath import mp

from qsmetric.errors import DomainError
from qsmetric.rng import generator
from qsmetric.stochastic import (
    geometric_mean,
    hitting_roots,
    law,
    lipschitz_check,
    lln_ladder,
    log_multiplier_variance,
    sample_log_weights,
    simulate_lln,
    walk_analysis,
)
from qsmetric.verifier import SampleSettings
from qsmetric.weights import Params


def test_law_from_zone_counts(params_16):
    multiplier, walk = law(params_16)
    assert multiplier.values == (1, 13, Fraction(1, 16))
    assert multiplier.probabilities == (Fraction(60, 256), Fraction(52, 256), Fraction(144, 256))
    assert sum(multiplier.probabilities) == 1
    assert (walk.p, walk.q) == (Fraction(7, 16), Fraction(9, 16))
    assert walk.transient


def test_hitting_roots(params_16):
    _, walk = law(params_16)
    r, one = hitting_roots(walk)
    assert (r, one) == (Fraction(7, 9), 1)
    assert walk.p + walk.q * r * r == r


@given(st.integers(5, 40))
def test_roots_solve_the_quadratic(M):
    _, walk = law(Params(n=2, M=M, L=Fraction(M)))
    for r in hitting_roots(walk):
        assert walk.p + walk.q * r * r == r
    assert (hitting_roots(walk)[0] < 1) == walk.transient


def test_geometric_mean_reference(params_8):
    assert float(geometric_mean(params_8).mu) == pytest.approx(0.98323, abs=1e-5)
    assert float(geometric_mean(Params.from_beta(2, 16, 3)).mu) == pytest.approx(0.01564, abs=1e-5)


def test_geometric_mean_matches_expected_log(params_8):
    gm = geometric_mean(params_8)
    with mp.workdps(40):
        expected = mp.mpf(20) / 64 * mp.log(5) - mp.mpf(16) / 64 * mp.log(8)
        assert abs(gm.log_mu - expected) < mp.mpf(10) ** -30


def test_log_variance_positive(params_8):
    assert log_multiplier_variance(params_8) > 0


def test_sample_log_weights_shape(params_8):
    logs = sample_log_weights(params_8, 5, 100, generator(1, "km", 1, 5))
    assert logs.shape == (100,)
    assert logs.max() <= 5 * float(mp.log(5)) + 1e-12


def test_lln_close_to_log_mu(params_8):
    stats = simulate_lln(params_8, points=20_000, steps=200, seed=1)
    assert stats.within_3se
    assert [b[0] for b in stats.batches] == [0, 1]
    assert sum(b[2] for b in stats.batches) == 20_000


def test_lln_standard_error_halves(params_8):
    ladder = lln_ladder(params_8, points=10_000, steps=100, seed=2)
    assert 0.4 <= ladder["se_ratio"] <= 0.6
    assert ladder["4N"]["N"] == 40_000


def test_lln_independent_of_workers(params_8):
    serial = simulate_lln(params_8, points=30_000, steps=50, seed=3, workers=1)
    pooled = simulate_lln(params_8, points=30_000, steps=50, seed=3, workers=3)
    assert serial.to_record() == pooled.to_record()


def test_lln_rejects_empty(params_8):
    with pytest.raises(DomainError):
        simulate_lln(params_8, points=0, steps=10, seed=1)


def test_recurrent_walk(params_8):
    report = walk_analysis(params_8, walks=2000, horizon=500, seed=1)
    assert report.status.startswith("recurrent")
    assert report.r is None
    assert report.within_3se
    assert report.to_record()["expected_drift"] == pytest.approx(0.5)


def test_transient_walk_hits_with_probability_r(params_16):
    report = walk_analysis(params_16, walks=20_000, horizon=1000, seed=1)
    assert report.r == Fraction(7, 9)
    assert report.full_measure == Fraction(2, 9)
    assert report.delta == Fraction(7, 9)
    assert report.within_3se
    assert report.drift == pytest.approx(-1 / 8, abs=0.01)


def test_walk_reproducible(params_16):
    first = walk_analysis(params_16, walks=1000, horizon=200, seed=9).to_record()
    second = walk_analysis(params_16, walks=1000, horizon=200, seed=9, workers=2).to_record()
    assert first == second


def test_lipschitz_needs_capped(params_16):
    with pytest.raises(DomainError):
        lipschitz_check(params_16, SampleSettings(count=1))


def test_capped_construction_is_lipschitz(capped_16):
    settings = SampleSettings(count=30, seed=1, node_budget=300_000, batch_size=10)
    report = lipschitz_check(capped_16, settings, level=2, resolution=3)
    assert report.passed
    assert report.worst_log10_margin >= 0


def test_drift_tolerance_lives_on_the_report(params_16):
    report = walk_analysis(params_16, walks=2000, horizon=500, seed=4)
    assert report.expected_drift == pytest.approx(-1 / 8)
    assert report.drift_standard_error == pytest.approx(2 * math.sqrt(63 / 256 / (2000 * 500)))
    assert report.drift_ok
    shifted = replace(report, drift=report.expected_drift + 10 * report.drift_standard_error)
    assert not shifted.drift_ok
    assert report.to_record()["drift_ok"] is True
