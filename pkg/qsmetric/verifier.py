"""
Lemma Verifier
Samples node pairs, paths and triples on weighted grids and checks the
construction's distance bounds against them.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from qsmetric.config import DEFAULT_NODE_BUDGET, DEFAULT_RESOLUTION_OFFSET
from qsmetric.constants import EtaCurve, constants
from qsmetric.errors import ConsistencyError, DomainError, ResourceBudgetError
from qsmetric.grid import (
    GridSpec,
    Stencil,
    anisotropy,
    box_size,
    build_weighted_grid,
    edge_factors,
    lattice_level,
    limit_distance,
    neighborhood_box,
    node_box,
    union_box,
)
from qsmetric.reports import BoundsReport, MarginTracker, log10_of, lower_margin, merge_trackers, upper_margin
from qsmetric.rng import batches, generator, parallel_map
from qsmetric.weights import (
    CubeAddress,
    Params,
    WeightField,
    cube_weight,
    node_cube,
    separation_level_nodes,
    zone_counts,
)

logger = logging.getLogger("qsmetric.verifier")

MODES = ("two_sided", "diameter", "metric_monotone", "path_monotone")

# Attempts per sampled target before it is dropped
MAX_ATTEMPTS = 20

# log10 t strata for scatter triples, half a decade each over [-6, 1]
STRATA = [(-6.0 + 0.5 * i, -5.5 + 0.5 * i) for i in range(14)]
SMALL_BUCKET = (1e-3, 1e-2)
LARGE_BUCKET = (1e-1, 1.0)


@dataclass(frozen=True)
class SampleSettings:
    """Sample sizes and grid budgets shared by the sampled checks."""

    count: int
    seed: int = 1
    max_weight_level: int = 3
    resolution_offset: int = DEFAULT_RESOLUTION_OFFSET
    node_budget: int = DEFAULT_NODE_BUDGET
    stencil: Stencil = Stencil.DIAGONAL
    targets_per_source: int = 10
    batch_size: int = 50
    workers: int = 0


def fit_resolution(level: int, offset: int, nodes_at: Callable[[int], int], budget: int) -> int:
    """Largest K in level..level+offset whose grid fits the node budget."""
    for K in range(level + offset, level - 1, -1):
        count = nodes_at(K)
        if count <= budget:
            return K
    raise ResourceBudgetError(f"no resolution fits at weight level {level}", nodes_at(level), budget)


def _random_boundary_node(rng: np.random.Generator, box) -> Tuple[int, ...]:
    lo, hi = box
    node = [int(rng.integers(l, h + 1)) for l, h in zip(lo, hi)]
    axis = int(rng.integers(len(lo)))
    node[axis] = lo[axis] if rng.integers(2) == 0 else hi[axis]
    return tuple(node)


def _random_cube(rng: np.random.Generator, params: Params, level: int) -> CubeAddress:
    count = params.M**level
    return CubeAddress(level, tuple(int(i) for i in rng.integers(0, count, size=params.n)))


def _log10_length(node_a: Sequence[int], node_b: Sequence[int], span: int) -> float:
    squared = sum((int(a) - int(b)) ** 2 for a, b in zip(node_a, node_b))
    return 0.5 * math.log10(squared) - math.log10(span)


def _weight_level(params: Params, settings: SampleSettings, rng, level: int, cells: int) -> int:
    """
    Weight level m in level..max_weight_level. A window of `cells` level-k
    cubes per axis must still fit the node budget at K = m.
    """
    top = level
    for m in range(level, settings.max_weight_level + 1):
        if (cells * params.M ** (m - level) + 1) ** params.n <= settings.node_budget:
            top = m
    return int(rng.integers(level, top + 1))


def _two_sided_source(params: Params, settings: SampleSettings, rng, targets: int) -> Dict[str, MarginTracker]:
    n, M = params.n, params.M
    trackers = {"lower": MarginTracker(), "upper": MarginTracker()}
    consts = constants(params)
    lam = anisotropy(settings.stencil, n)

    k = int(rng.integers(1, max(1, settings.max_weight_level) + 1))
    m = _weight_level(params, settings, rng, k, 7)
    K = fit_resolution(
        m, settings.resolution_offset, lambda K: (7 * M ** (K - k) + 1) ** n, settings.node_budget
    )
    s = M ** (K - k)
    span = M**K
    x = tuple(int(c) for c in rng.integers(0, span + 1, size=n))

    ys = []
    for _ in range(targets):
        for _ in range(MAX_ATTEMPTS):
            d = rng.integers(-3 * s, 3 * s + 1, size=n)
            axis = int(rng.integers(n))
            d[axis] = (1 if rng.integers(2) else -1) * int(rng.integers(2 * s, 3 * s + 1))
            y = tuple(int(a + b) for a, b in zip(x, d))
            if any(c < 0 or c > span for c in y):
                continue
            if separation_level_nodes(M, K, x, y) != k:
                continue
            ys.append(y)
            break
    if not ys:
        return trackers

    window = union_box([node_box(node_cube(p, K, k, M), K, M) for p in [x] + ys])
    grid = build_weighted_grid(params, GridSpec(m, K, settings.stencil, window), settings.node_budget)
    dist = grid.distances_from(x)
    log_r = log10_of(cube_weight(params, node_cube(x, K, k, M)).value(params))
    log_low = log_r - log10_of(2 * n * M * consts.R)
    log_high = math.log10(lam) + consts.log10_C1 + consts.log10_C2 + log_r
    if m > k:
        trackers["refined"] = MarginTracker()
    for y in ys:
        observed = float(dist[grid.index_of(y)])
        length = _log10_length(x, y, span)
        low = lower_margin(observed, log_low + length)
        high = upper_margin(observed, log_high + length)
        trackers["lower"].add(low)
        trackers["upper"].add(high)
        if m > k:
            trackers["refined"].add(min(low, high))
    return trackers


def _diameter_source(params: Params, settings: SampleSettings, rng, targets: int) -> Dict[str, MarginTracker]:
    n, M = params.n, params.M
    trackers = {"upper": MarginTracker()}
    consts = constants(params)
    lam = anisotropy(settings.stencil, n)

    k = int(rng.integers(0, settings.max_weight_level + 1))
    m = _weight_level(params, settings, rng, k, 3)
    K = fit_resolution(
        m, settings.resolution_offset, lambda K: (3 * M ** (K - k) + 1) ** n, settings.node_budget
    )
    span = M**K
    cube = _random_cube(rng, params, k)
    window = neighborhood_box(cube, K, M)
    x = _random_boundary_node(rng, node_box(cube, K, M))

    grid = build_weighted_grid(params, GridSpec(m, K, settings.stencil, window), settings.node_budget)
    dist = grid.distances_from(x)
    bound = math.log10(lam) + consts.log10_C1 + log10_of(cube_weight(params, cube).value(params))
    if m > k:
        trackers["refined"] = MarginTracker()
    for _ in range(targets):
        y = tuple(int(rng.integers(l, h + 1)) for l, h in zip(*window))
        if y == x:
            continue
        margin = upper_margin(float(dist[grid.index_of(y)]), bound + _log10_length(x, y, span))
        trackers["upper"].add(margin)
        if m > k:
            trackers["refined"].add(margin)
    return trackers


def _monotone_setup(params: Params, settings: SampleSettings, rng):
    M = params.M
    k = int(rng.integers(0, max(0, min(2, settings.max_weight_level - 1)) + 1))
    K = fit_resolution(
        k + 1,
        settings.resolution_offset,
        lambda K: (M ** (K - k) + 1) ** params.n,
        settings.node_budget,
    )
    cube = _random_cube(rng, params, k)
    box = node_box(cube, K, M)
    return k, K, box


def _metric_monotone_source(params: Params, settings: SampleSettings, rng, targets: int) -> Dict[str, MarginTracker]:
    tracker = MarginTracker()
    lam = anisotropy(settings.stencil, params.n)
    k, K, box = _monotone_setup(params, settings, rng)
    x = _random_boundary_node(rng, box)

    coarse = build_weighted_grid(params, GridSpec(k, K, settings.stencil, box), settings.node_budget)
    fine = build_weighted_grid(params, GridSpec(k + 1, K, settings.stencil, box), settings.node_budget)
    d_coarse = coarse.distances_from(x)
    d_fine = fine.distances_from(x)
    for _ in range(targets):
        y = _random_boundary_node(rng, box)
        if y == x:
            continue
        i = coarse.index_of(y)
        tracker.add(lower_margin(float(d_fine[i]), log10_of(float(d_coarse[i]) / lam)))
    return {"lower": tracker}


def staircase(rng: np.random.Generator, x: Sequence[int], y: Sequence[int]) -> np.ndarray:
    """Random monotone axis path from x to y, as an array of visited nodes."""
    steps = []
    for axis, (a, b) in enumerate(zip(x, y)):
        unit = np.zeros(len(x), dtype=np.int64)
        unit[axis] = 1 if b > a else -1
        steps.extend([unit] * abs(b - a))
    order = rng.permutation(len(steps))
    moves = np.array(steps, dtype=np.int64)[order] if steps else np.zeros((0, len(x)), dtype=np.int64)
    return np.vstack([np.array(x, dtype=np.int64), np.array(x, dtype=np.int64) + np.cumsum(moves, axis=0)])


def path_length(params: Params, level: int, resolution: int, box, path: np.ndarray) -> float:
    """l_k of a lattice path inside a node box, using the lower semicontinuous weights."""
    M = params.M
    scale = M ** (resolution - level)
    cells = M**level
    cube_lo = tuple(max(l // scale - 1, 0) for l in box[0])
    cube_hi = tuple(min(h // scale + 1, cells) for h in box[1])
    field = WeightField(params, level, cube_lo, cube_hi)
    start = [path[:-1, i] for i in range(params.n)]
    end = [path[1:, i] for i in range(params.n)]
    factors = edge_factors(field.values(), cube_lo, scale, cells, start, end)
    lengths = np.sqrt(((path[1:] - path[:-1]) ** 2).sum(axis=1)) / M**resolution
    return float((factors * lengths).sum())


def _path_monotone_source(params: Params, settings: SampleSettings, rng, targets: int) -> Dict[str, MarginTracker]:
    tracker = MarginTracker()
    lam = anisotropy(settings.stencil, params.n)
    k, K, box = _monotone_setup(params, settings, rng)
    x = _random_boundary_node(rng, box)

    coarse = build_weighted_grid(params, GridSpec(k, K, settings.stencil, box), settings.node_budget)
    d_coarse = coarse.distances_from(x)
    for _ in range(targets):
        y = _random_boundary_node(rng, box)
        if y == x:
            continue
        length = path_length(params, k + 1, K, box, staircase(rng, x, y))
        tracker.add(lower_margin(length, log10_of(float(d_coarse[coarse.index_of(y)]) / lam)))
    return {"lower": tracker}


SOURCES = {
    "two_sided": _two_sided_source,
    "diameter": _diameter_source,
    "metric_monotone": _metric_monotone_source,
    "path_monotone": _path_monotone_source,
}


def _bounds_batch(task) -> Dict[str, MarginTracker]:
    mode, params, settings, batch_id, count = task
    rng = generator(settings.seed, mode, batch_id)
    parts = []
    remaining = count
    while remaining > 0:
        targets = min(settings.targets_per_source, remaining)
        remaining -= targets
        try:
            parts.append(SOURCES[mode](params, settings, rng, targets))
        except ResourceBudgetError as e:
            logger.warning(f"{mode}: sample skipped, {e}")
            skipped = MarginTracker()
            skipped.skip(targets)
            parts.append({"budget": skipped})
    return merge_trackers(parts)


def bounds_report(params: Params, mode: str, settings: SampleSettings) -> BoundsReport:
    """
    Sampled check of one distance bound.

    Modes:
        two_sided: r_k(x)|x-y|/(2nMR) <= graph d_m(x,y) <= lambda C1 C2 r_k(x)|x-y|,
            k the separation level and m >= k; the lower side carries no slack
        diameter: graph d_m(x,y) <= lambda C1 r_k(I)|x-y| for m >= k, x on the
            boundary of Q_k(I) and y in its neighbourhood
        metric_monotone: graph d_{k+1} >= graph d_k / lambda on boundary nodes of a cube
        path_monotone: l_{k+1}(path) >= graph d_k(endpoints) / lambda for random
            monotone paths between boundary nodes of a cube

    Args:
        params: Construction parameters
        mode: One of MODES
        settings: Sample size, seed and grid budgets

    Returns:
        BoundsReport with the worst margin over all samples; details["refined"]
        summarises the samples whose weight level m exceeds the cube level k
    """
    if mode not in SOURCES:
        raise DomainError(f"unknown bounds mode: {mode}")
    logger.info(f"🔍 {mode}: {settings.count} samples, seed {settings.seed}")
    tasks = [(mode, params, settings, b, c) for b, c in batches(settings.count, settings.batch_size)]
    trackers = merge_trackers(parallel_map(_bounds_batch, tasks, settings.workers))
    budget = trackers.pop("budget", None)
    refined = trackers.pop("refined", MarginTracker())
    if budget is not None:
        trackers.setdefault(next(iter(trackers), "upper"), MarginTracker()).merge(budget)
    report = BoundsReport.from_trackers(
        check=mode,
        params=params.describe(),
        trackers=trackers,
        seed=settings.seed,
        slack="lambda on upper bounds only",
        lam=anisotropy(settings.stencil, params.n),
        details={
            "stencil": settings.stencil.value,
            "max_weight_level": settings.max_weight_level,
            "resolution_offset": settings.resolution_offset,
            "refined": refined.summary(),
        },
    )
    logger.info(f"{'✅' if report.passed else '❌'} {mode}: worst log10 margin {report.worst_log10_margin}")
    return report


def ratio_bound_report(params: Params, level: int, budget: int = DEFAULT_NODE_BUDGET) -> BoundsReport:
    """
    Exhaustive exact check of 1/R <= r_k(I)/r_k(I') <= R over neighbouring
    level-k cubes, plus the universal bound r_k <= (M-2n+1)^k (at most
    M-2n+1 for the capped construction).
    """
    field = WeightField(params, level, budget=budget)
    count = params.M**level
    R = params.R
    G = Fraction(params.growth)

    differences = []
    pairs = 0
    for shift in product((-1, 0, 1), repeat=params.n):
        if not any(shift):
            continue
        src = tuple(slice(max(0, -s), count - max(0, s)) for s in shift)
        dst = tuple(slice(max(0, s), count - max(0, -s)) for s in shift)
        da = (field.a[dst] - field.a[src]).ravel()
        db = (field.b[dst] - field.b[src]).ravel()
        pairs += da.size
        if da.size:
            differences.append(np.unique(np.stack([da, db], axis=1), axis=0))

    tracker = MarginTracker()
    violations = 0
    if differences:
        for da, db in np.unique(np.vstack(differences), axis=0).tolist():
            ratio = G**da / params.L**db
            if not (1 / R <= ratio <= R):
                violations += 1
            tracker.add(log10_of(R) - abs(log10_of(ratio)))

    cap = G if params.capped else G**level
    largest = max(w.value(params) for w in field.distinct_exponents())
    passed = violations == 0 and largest <= cap
    return BoundsReport(
        check=f"ratio_bound_k{level}",
        params=params.describe(),
        sample_count=pairs,
        worst_log10_margin=tracker.worst if tracker.count else None,
        passed=passed,
        seed=0,
        details={
            "level": level,
            "distinct_ratios": tracker.count,
            "violations": violations,
            "max_weight": str(largest),
            "weight_cap": str(cap),
        },
    )


def zone_counts_report(n_values: Sequence[int], M_values: Sequence[int]) -> List[Dict[str, object]]:
    """Enumerated against closed-form zone counts for every valid (n, M) pair."""
    rows = []
    for n in n_values:
        for M in M_values:
            if M <= 2 * n:
                continue
            params = Params(n=n, M=M, L=Fraction(2))
            try:
                c1, c2, c3 = zone_counts(params)
                rows.append({"n": n, "M": M, "c1": c1, "c2": c2, "c3": c3, "agrees": True})
            except ConsistencyError as e:
                logger.error(str(e))
                rows.append({"n": n, "M": M, "c1": None, "c2": None, "c3": None, "agrees": False})
    return rows


@dataclass(frozen=True)
class ScatterSettings:
    triples: int
    seed: int = 1
    qs_levels: int = 1
    tol: float = 1e-6
    resolution_offset: int = DEFAULT_RESOLUTION_OFFSET
    node_budget: int = DEFAULT_NODE_BUDGET
    stencil: Stencil = Stencil.DIAGONAL
    batch_size: int = 50
    workers: int = 0


def _sample_triple(params: Params, rng, log_t: float):
    n, M = params.n, params.M
    jz = int(rng.integers(1, 3))
    jy = max(jz + int(round(-log_t / math.log10(M))), 0)
    jx = min(jz, jy)
    for _ in range(MAX_ATTEMPTS):
        x = tuple(Fraction(int(c), M**jx) for c in rng.integers(0, M**jx + 1, size=n))
        u = rng.integers(-1, 2, size=n)
        v = rng.integers(-1, 2, size=n)
        if not u.any() or not v.any():
            continue
        z = tuple(c + Fraction(int(d), M**jz) for c, d in zip(x, u))
        y = tuple(c + Fraction(int(d), M**jy) for c, d in zip(x, v))
        if y == z or any(c < 0 or c > 1 for c in y + z):
            continue
        return x, y, z
    return None


def _distance(params: Params, settings: ScatterSettings, a, b):
    level = max(lattice_level(a, params.M), lattice_level(b, params.M))
    return limit_distance(
        params,
        a,
        b,
        tol=settings.tol,
        max_level=level + settings.qs_levels - 1,
        stencil=settings.stencil,
        resolution_offset=settings.resolution_offset,
        budget=settings.node_budget,
    )


def _scatter_batch(task) -> List[Dict[str, object]]:
    params, settings, batch_id, count, first = task
    rng = generator(settings.seed, "qs_scatter", batch_id)
    eta = EtaCurve(params)
    rows = []
    for i in range(count):
        low, high = STRATA[(first + i) % len(STRATA)]
        triple = _sample_triple(params, rng, low + (high - low) * float(rng.random()))
        if triple is None:
            continue
        x, y, z = triple
        near = _distance(params, settings, x, y)
        far = _distance(params, settings, x, z)
        t = math.sqrt(float(sum((a - b) ** 2 for a, b in zip(x, y))) / float(sum((a - c) ** 2 for a, c in zip(x, z))))
        log_eta = eta.log10_eta(t)
        usable = math.isfinite(near.upper_bound) and far.lower_bound > 0
        log_ratio = math.log10(near.upper_bound) - math.log10(far.lower_bound) if usable else math.nan
        rows.append(
            {
                "t": t,
                "ratio": 10.0**log_ratio if usable else math.nan,
                "eta_t": eta(t),
                "log10_ratio": log_ratio,
                "log10_eta_t": log_eta,
                "point_ratio": near.value / far.value if far.value > 0 else math.nan,
                "inconclusive": not usable,
            }
        )
    return rows


def _bucket_max(frame: pd.DataFrame, bucket: Tuple[float, float]) -> Optional[float]:
    inside = frame[(frame["t"] >= bucket[0]) & (frame["t"] <= bucket[1])]["point_ratio"].dropna()
    return float(inside.max()) if len(inside) else None


def qs_scatter(params: Params, settings: ScatterSettings) -> Tuple[BoundsReport, pd.DataFrame]:
    """
    Sample triples (x, y, z) and compare d(x,y)/d(x,z) against eta(|x-y|/|x-z|).

    Triples are stratified over log10 t in [-6, 1]. The checked ratio is the
    upper bracket of d(x,y) over the lower bracket of d(x,z); the decay check
    compares point estimates between the small-t and the large-t bucket.

    Returns:
        (report, frame) where frame has one row per triple, columns
        t, ratio, eta_t first
    """
    logger.info(f"🔺 qs_scatter: {settings.triples} triples, seed {settings.seed}")
    tasks = [
        (params, settings, b, c, b * settings.batch_size)
        for b, c in batches(settings.triples, settings.batch_size)
    ]
    rows = [row for part in parallel_map(_scatter_batch, tasks, settings.workers) for row in part]
    frame = pd.DataFrame(
        rows,
        columns=["t", "ratio", "eta_t", "log10_ratio", "log10_eta_t", "point_ratio", "inconclusive"],
    )

    tracker = MarginTracker()
    for row in rows:
        if row["inconclusive"]:
            tracker.skip()
        else:
            tracker.add(row["log10_eta_t"] - row["log10_ratio"])

    small = _bucket_max(frame, SMALL_BUCKET)
    large = _bucket_max(frame, LARGE_BUCKET)
    decay_ok = small is not None and large is not None and small < large
    report = BoundsReport.from_trackers(
        check="qs_scatter",
        params=params.describe(),
        trackers={"eta": tracker},
        seed=settings.seed,
        slack="none (conservative brackets)",
        lam=anisotropy(settings.stencil, params.n),
        details={
            "decay": {"small_bucket_max": small, "large_bucket_max": large, "pass": decay_ok},
            "qs_levels": settings.qs_levels,
            "rejected": settings.triples - len(rows),
        },
    )
    report.passed = report.passed and decay_ok
    logger.info(f"{'✅' if report.passed else '❌'} qs_scatter: {len(rows)} triples, decay {small} < {large}")
    return report, frame
