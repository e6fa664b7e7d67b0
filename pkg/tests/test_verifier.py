"""
Sampled and exhaustive checks of the distance lemmas
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from qsmetric.constants import EtaCurve
from qsmetric.errors import DomainError
from qsmetric.grid import GridSpec, build_weighted_grid
from qsmetric.verifier import (
    MODES,
    SampleSettings,
    ScatterSettings,
    bounds_report,
    fit_resolution,
    path_length,
    qs_scatter,
    ratio_bound_report,
    staircase,
    zone_counts_report,
)
from qsmetric.weights import Params

SMALL = dict(max_weight_level=2, node_budget=200_000, batch_size=10, targets_per_source=5)


@pytest.mark.parametrize("level", [1, 2, 3])
def test_ratio_bound_exhaustive(params_8, level):
    report = ratio_bound_report(params_8, level)
    assert report.passed
    assert report.details["violations"] == 0
    assert report.worst_log10_margin >= 0
    assert report.check == f"ratio_bound_k{level}"


def test_ratio_bound_capped(capped_16):
    report = ratio_bound_report(capped_16, 2)
    assert report.passed
    assert Fraction(report.details["max_weight"]) <= capped_16.growth


def test_zone_counts_table():
    rows = zone_counts_report((2, 3), range(8, 21))
    assert len(rows) == 26
    assert all(row["agrees"] for row in rows)
    assert {"n": 2, "M": 8, "c1": 28, "c2": 20, "c3": 16, "agrees": True} in rows


def test_fit_resolution_falls_back():
    assert fit_resolution(1, 2, lambda K: 10**K, 1000) == 3
    assert fit_resolution(1, 2, lambda K: 10**K, 150) == 2


@pytest.mark.parametrize("mode", MODES)
def test_bounds_hold_on_small_samples(params_8, mode):
    report = bounds_report(params_8, mode, SampleSettings(count=20, seed=7, **SMALL))
    assert report.passed, report.to_record()
    assert report.sample_count > 0
    assert report.inconclusive == 0


def test_two_sided_reports_both_sides(params_8):
    report = bounds_report(params_8, "two_sided", SampleSettings(count=10, **SMALL))
    assert set(report.details["sides"]) == {"lower", "upper"}


@pytest.mark.parametrize("mode", ["two_sided", "diameter"])
def test_bounds_hold_at_finer_weight_levels(params_8, mode):
    settings = SampleSettings(
        count=60, seed=11, max_weight_level=2, node_budget=200_000, batch_size=10, targets_per_source=2
    )
    report = bounds_report(params_8, mode, settings)
    refined = report.details["refined"]
    assert refined["N"] > 0
    assert refined["pass"]
    assert report.passed, report.to_record()
    assert "refined" not in report.details.get("sides", {})


def test_bounds_are_reproducible(params_8):
    settings = SampleSettings(count=20, seed=3, **SMALL)
    first = bounds_report(params_8, "diameter", settings).to_record()
    second = bounds_report(params_8, "diameter", settings).to_record()
    assert first == second


def test_worker_count_does_not_change_results(params_8):
    serial = bounds_report(params_8, "metric_monotone", SampleSettings(count=20, seed=5, workers=1, **SMALL))
    pooled = bounds_report(params_8, "metric_monotone", SampleSettings(count=20, seed=5, workers=2, **SMALL))
    assert serial.to_record() == pooled.to_record()


def test_budget_makes_samples_inconclusive(params_8):
    report = bounds_report(params_8, "diameter", SampleSettings(count=5, node_budget=4, batch_size=5))
    assert report.inconclusive == 5
    assert not report.passed


def test_unknown_mode(params_8):
    with pytest.raises(DomainError):
        bounds_report(params_8, "sideways", SampleSettings(count=1))


def test_staircase_is_monotone():
    rng = np.random.default_rng(0)
    path = staircase(rng, (0, 5), (4, 1))
    assert tuple(path[0]) == (0, 5)
    assert tuple(path[-1]) == (4, 1)
    assert len(path) == 9
    assert (np.abs(np.diff(path, axis=0)).sum(axis=1) == 1).all()


def test_path_length_matches_straight_edge_weights(params_8):
    box = ((0, 0), (64, 64))
    path = staircase(np.random.default_rng(1), (0, 0), (64, 0))
    assert path_length(params_8, 1, 2, box, path) == pytest.approx(1.0)


def test_path_length_dominates_graph_distance(params_8):
    box = ((24, 24), (32, 32))
    grid = build_weighted_grid(params_8, GridSpec(1, 2, window=box))
    rng = np.random.default_rng(2)
    path = staircase(rng, (24, 30), (32, 25))
    assert path_length(params_8, 1, 2, box, path) >= grid.distance((24, 30), (32, 25)) - 1e-12


def test_qs_scatter_columns(params_8):
    settings = ScatterSettings(
        triples=14, seed=2, resolution_offset=1, node_budget=300_000, batch_size=7
    )
    report, frame = qs_scatter(params_8, settings)
    assert list(frame.columns[:3]) == ["t", "ratio", "eta_t"]
    assert len(frame) <= 14
    assert (frame["t"] > 0).all()
    usable = frame[~frame["inconclusive"].astype(bool)]
    assert (usable["log10_ratio"] <= usable["log10_eta_t"]).all()
    assert report.check == "qs_scatter"
    assert "decay" in report.details


def test_qs_scatter_eta_matches_curve(params_8):
    settings = ScatterSettings(triples=7, seed=4, resolution_offset=1, node_budget=300_000, batch_size=7)
    _, frame = qs_scatter(params_8, settings)
    eta = EtaCurve(params_8)
    for t, log_eta in zip(frame["t"], frame["log10_eta_t"]):
        assert log_eta == pytest.approx(eta.log10_eta(t))
    assert all(math.isfinite(v) for v in frame["log10_eta_t"])


def test_params_fixture_is_reference(params_8):
    assert params_8 == Params(n=2, M=8, L=Fraction(8))


def test_qs_scatter_ratio_decays_with_t(params_8):
    settings = ScatterSettings(triples=70, seed=1, resolution_offset=1, node_budget=300_000, batch_size=14)
    report, frame = qs_scatter(params_8, settings)
    decay = report.details["decay"]
    assert decay["small_bucket_max"] is not None
    assert decay["large_bucket_max"] is not None
    assert decay["pass"]
    assert decay["small_bucket_max"] < decay["large_bucket_max"]
    assert ((frame["t"] >= 1e-3) & (frame["t"] <= 1e-2)).any()


def test_qs_scatter_independent_of_workers(params_8):
    serial = ScatterSettings(triples=14, seed=6, resolution_offset=1, node_budget=300_000, batch_size=7, workers=1)
    pooled = ScatterSettings(triples=14, seed=6, resolution_offset=1, node_budget=300_000, batch_size=7, workers=2)
    first, first_frame = qs_scatter(params_8, serial)
    second, second_frame = qs_scatter(params_8, pooled)
    assert first.to_record() == second.to_record()
    assert first_frame.to_csv(index=False) == second_frame.to_csv(index=False)
