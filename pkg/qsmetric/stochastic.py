"""
Stochastic Lab
The i.i.d. multiplier law behind the weights, its geometric mean, and the
biased walk that governs the capped construction.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from mpmath import mp, mpf
from scipy.stats import binomtest

from qsmetric.config import MP_DIGITS, RNG_ALGORITHM
from qsmetric.errors import ConsistencyError, DomainError, ResourceBudgetError
from qsmetric.grid import GridSpec, anisotropy, build_weighted_grid
from qsmetric.reports import BoundsReport, MarginTracker, merge_trackers, upper_margin
from qsmetric.rng import batches, generator, parallel_map
from qsmetric.weights import Params, zone_counts

logger = logging.getLogger("qsmetric.stochastic")

# Fixed batch sizes keep sample streams independent of worker count
LLN_BATCH = 10_000
WALK_BATCH = 200


def _mp(value: Fraction) -> mpf:
    return mpf(value.numerator) / mpf(value.denominator)


def _mp_log(value: Fraction) -> mpf:
    return mp.log(mpf(value.numerator)) - mp.log(mpf(value.denominator))


@dataclass(frozen=True)
class MultiplierLaw:
    """Law of the per-level factor X: 1 on P1, M-2n+1 on P2, 1/L on P3."""

    values: Tuple[Fraction, Fraction, Fraction]
    probabilities: Tuple[Fraction, Fraction, Fraction]

    def float_probabilities(self) -> List[float]:
        return [float(p) for p in self.probabilities]

    def as_dict(self) -> Dict[str, Any]:
        return {
            "values": [str(v) for v in self.values],
            "probabilities": [str(p) for p in self.probabilities],
        }


@dataclass(frozen=True)
class WalkLaw:
    """+-1 walk: up on P1/P2 with probability p, down on P3 with probability q."""

    p: Fraction
    q: Fraction

    @property
    def transient(self) -> bool:
        return self.q > Fraction(1, 2)

    def as_dict(self) -> Dict[str, Any]:
        return {"p": str(self.p), "q": str(self.q)}


def law(params: Params) -> Tuple[MultiplierLaw, WalkLaw]:
    """
    Exact multiplier and walk laws from the zone counts.

    Raises:
        ConsistencyError: if the probabilities fail to sum to one
    """
    c1, c2, c3 = zone_counts(params)
    total = params.M**params.n
    probabilities = (Fraction(c1, total), Fraction(c2, total), Fraction(c3, total))
    multiplier = MultiplierLaw(
        values=(Fraction(1), Fraction(params.growth), 1 / params.L),
        probabilities=probabilities,
    )
    walk = WalkLaw(p=probabilities[0] + probabilities[1], q=probabilities[2])
    if sum(probabilities) != 1 or walk.p + walk.q != 1:
        raise ConsistencyError(f"law probabilities {probabilities} do not sum to 1")
    return multiplier, walk


@dataclass(frozen=True)
class GeometricMean:
    mu: mpf
    log_mu: mpf

    def __float__(self) -> float:
        return float(self.mu)


def geometric_mean(params: Params) -> GeometricMean:
    """mu = exp E[ln X] at MP_DIGITS precision."""
    multiplier, _ = law(params)
    with mp.workdps(MP_DIGITS):
        log_mu = mpf(0)
        for p, v in zip(multiplier.probabilities, multiplier.values):
            log_mu += _mp(p) * _mp_log(v)
        return GeometricMean(mu=mp.exp(log_mu), log_mu=log_mu)


def log_multiplier_variance(params: Params) -> mpf:
    """Var ln X = sum p_i (ln v_i)^2 - (ln mu)^2."""
    multiplier, _ = law(params)
    with mp.workdps(MP_DIGITS):
        second = mpf(0)
        for p, v in zip(multiplier.probabilities, multiplier.values):
            second += _mp(p) * _mp_log(v) ** 2
        return second - geometric_mean(params).log_mu ** 2


def _log_factors(params: Params) -> Tuple[float, float]:
    return math.log(params.growth), math.log(params.L)


@dataclass
class LLNStats:
    mean: float
    std: float
    deviation: float
    log_mu: float
    points: int
    steps: int
    seed: int
    batches: List[Tuple[int, float, int]] = field(default_factory=list)

    @property
    def standard_error(self) -> float:
        return self.std / math.sqrt(self.points)

    @property
    def within_3se(self) -> bool:
        return abs(self.deviation) <= 3 * self.standard_error

    def to_record(self) -> Dict[str, Any]:
        return {
            "mean": self.mean,
            "std": self.std,
            "deviation": self.deviation,
            "log_mu": self.log_mu,
            "standard_error": self.standard_error,
            "within_3se": self.within_3se,
            "N": self.points,
            "k": self.steps,
            "seed": self.seed,
            "rng": RNG_ALGORITHM,
        }


def _lln_batch(task) -> Tuple[int, float, float, int]:
    params, steps, seed, batch_id, count = task
    multiplier, _ = law(params)
    log_g, log_l = _log_factors(params)
    rng = generator(seed, "lln", steps, batch_id)
    counts = rng.multinomial(steps, multiplier.float_probabilities(), size=count)
    logs = (counts[:, 1] * log_g - counts[:, 2] * log_l) / steps
    return batch_id, float(logs.sum()), float((logs**2).sum()), count


def simulate_lln(params: Params, points: int, steps: int, seed: int, workers: int = 0) -> LLNStats:
    """
    Sample (1/k) ln Y_k for N independent digit streams.

    Args:
        params: Construction parameters
        points: N, number of streams
        steps: k, digits per stream
        seed: Root seed

    Returns:
        LLNStats with the deviation of the mean from ln mu
    """
    if points < 1 or steps < 1:
        raise DomainError("simulate_lln needs N >= 1 and k >= 1")
    tasks = [(params, steps, seed, b, c) for b, c in batches(points, LLN_BATCH)]
    results = parallel_map(_lln_batch, tasks, workers)
    total = sum(r[1] for r in results)
    total_sq = sum(r[2] for r in results)
    mean = total / points
    var = (total_sq - points * mean * mean) / (points - 1) if points > 1 else 0.0
    log_mu = float(geometric_mean(params).log_mu)
    return LLNStats(
        mean=mean,
        std=math.sqrt(max(var, 0.0)),
        deviation=mean - log_mu,
        log_mu=log_mu,
        points=points,
        steps=steps,
        seed=seed,
        batches=[(r[0], r[1], r[3]) for r in results],
    )


def lln_ladder(params: Params, points: int, steps: int, seed: int, workers: int = 0) -> Dict[str, Any]:
    """Run N and 4N; the standard error should halve."""
    base = simulate_lln(params, points, steps, seed, workers)
    wide = simulate_lln(params, 4 * points, steps, seed + 1, workers)
    se_ratio = wide.standard_error / base.standard_error if base.standard_error > 0 else math.nan
    return {
        "N": base.to_record(),
        "4N": wide.to_record(),
        "se_ratio": se_ratio,
        "pass": base.within_3se and wide.within_3se and 0.4 <= se_ratio <= 0.6,
        "batches": base.batches,
    }


@dataclass
class KmEstimate:
    m: int
    k: int
    fraction: float
    ci_low: float
    ci_high: float
    target: float
    found: bool
    samples: int
    scan: List[Dict[str, Any]] = field(default_factory=list)

    def to_record(self) -> Dict[str, Any]:
        return {
            "m": self.m,
            "k_m": self.k,
            "fraction": self.fraction,
            "ci": [self.ci_low, self.ci_high],
            "target": self.target,
            "found": self.found,
            "samples": self.samples,
            "scan": self.scan,
        }


def sample_log_weights(params: Params, level: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    """ln r_k for uniformly random level-k cubes (digit strings), uncapped."""
    multiplier, _ = law(params)
    log_g, log_l = _log_factors(params)
    counts = rng.multinomial(level, multiplier.float_probabilities(), size=samples)
    return counts[:, 1] * log_g - counts[:, 2] * log_l


def select_km(plan, m: int, samples: int, seed: int, max_level: int = 2**16, start: int = 0) -> KmEstimate:
    """
    Doubling scan k = m, 2m, 4m, ... for the first level at which the fraction
    of cubes with r_k <= (1 + 2^-m)^k mu^k is at least 1 - 2^-m with 95%
    Wilson confidence.

    Args:
        plan: DimensionPlan supplying params and mu
        m: Index m >= 1
        samples: Digit strings per scanned level
        seed: Root seed
        max_level: Scan cap
        start: Lowest level to scan from (keeps k_m nondecreasing in m)

    Returns:
        KmEstimate; found is False when the cap stopped the scan
    """
    if m < 1:
        raise DomainError(f"m must be at least 1, got {m}")
    target = 1.0 - 2.0**-m
    slack = math.log1p(2.0**-m) + float(plan.log_mu)
    best = None
    k = max(m, start)
    scan = []
    while k <= max_level:
        rng = generator(seed, "km", m, k)
        log_r = sample_log_weights(plan.params, k, samples, rng)
        hits = int(np.count_nonzero(log_r <= k * slack))
        ci = binomtest(hits, samples).proportion_ci(confidence_level=0.95, method="wilson")
        fraction = hits / samples
        scan.append({"k": k, "fraction": fraction, "ci_low": float(ci.low)})
        best = KmEstimate(m, k, fraction, float(ci.low), float(ci.high), target, bool(ci.low >= target), samples)
        if best.found:
            break
        k *= 2
    if best is None:
        raise DomainError(f"scan cap {max_level} is below m = {m}")
    best.scan = scan
    if not best.found:
        logger.warning(f"k_m scan for m={m} reached cap {max_level}; best fraction {best.fraction:.4f}")
    return best


@dataclass
class WalkReport:
    law: WalkLaw
    status: str
    r: Optional[Fraction]
    full_measure: Optional[Fraction]
    hit_fraction: float
    standard_error: float
    walks: int
    horizon: int
    drift: float
    seed: int

    @property
    def delta(self) -> Optional[Fraction]:
        return None if self.full_measure is None else 1 - self.full_measure

    @property
    def within_3se(self) -> bool:
        if self.r is None:
            return True
        return abs(self.hit_fraction - float(self.r)) <= 3 * self.standard_error

    @property
    def expected_drift(self) -> float:
        return float(self.law.p - self.law.q)

    @property
    def drift_standard_error(self) -> float:
        """Standard error of the mean step: each walk contributes Y_H / H with variance 4pq / H."""
        return 2 * math.sqrt(float(self.law.p * self.law.q) / (self.walks * self.horizon))

    @property
    def drift_ok(self) -> bool:
        return abs(self.drift - self.expected_drift) <= 3 * self.drift_standard_error + 1e-12

    def to_record(self) -> Dict[str, Any]:
        record = {
            "status": self.status,
            "law": self.law.as_dict(),
            "hit_fraction": self.hit_fraction,
            "full_measure_estimate": 1.0 - self.hit_fraction,
            "standard_error": self.standard_error,
            "N": self.walks,
            "H": self.horizon,
            "drift": self.drift,
            "expected_drift": self.expected_drift,
            "drift_standard_error": self.drift_standard_error,
            "drift_ok": self.drift_ok,
            "truncation": "one-sided: walks hitting +1 after H steps are counted as misses",
            "seed": self.seed,
            "rng": RNG_ALGORITHM,
            "within_3se": self.within_3se,
        }
        if self.r is not None:
            record.update(
                {
                    "r": str(self.r),
                    "r_float": float(self.r),
                    "F": str(self.full_measure),
                    "F_float": float(self.full_measure),
                    "delta": str(self.delta),
                }
            )
        return record


def hitting_roots(walk: WalkLaw) -> Tuple[Fraction, Fraction]:
    """Both roots of r = p + q r^2, in increasing order."""
    roots = sorted({walk.p / walk.q, Fraction(1)})
    if len(roots) == 1:
        roots = roots * 2
    for r in roots:
        if walk.p + walk.q * r * r != r:
            raise ConsistencyError(f"{r} is not a root of r = p + q r^2")
    return roots[0], roots[1]


def _walk_batch(task) -> Tuple[int, int]:
    p, horizon, seed, batch_id, count = task
    rng = generator(seed, "walk", horizon, batch_id)
    steps = np.where(rng.random((count, horizon)) < p, 1, -1).astype(np.int32)
    paths = np.cumsum(steps, axis=1, dtype=np.int32)
    return int(np.count_nonzero(paths.max(axis=1) >= 1)), int(paths[:, -1].sum(dtype=np.int64))


def walk_analysis(params: Params, walks: int, horizon: int, seed: int, workers: int = 0) -> WalkReport:
    """
    Hitting probability of +1 for the walk Y_k, analytic and simulated.

    For q > 1/2 the walk drifts down and r = (1-q)/q, the smaller root of
    r = p + q r^2; the points that never reach Y = 1 then have measure
    (2q-1)/q. Otherwise the walk hits +1 almost surely.
    """
    if walks < 1 or horizon < 1:
        raise DomainError("walk_analysis needs N >= 1 and H >= 1")
    _, walk = law(params)
    if walk.transient:
        r, _ = hitting_roots(walk)
        full_measure = 1 - r
        status = "transient: r = (1-q)/q"
    else:
        r = full_measure = None
        status = "recurrent/critical: r = 1"

    tasks = [(float(walk.p), horizon, seed, b, c) for b, c in batches(walks, WALK_BATCH)]
    results = parallel_map(_walk_batch, tasks, workers)
    hits = sum(h for h, _ in results)
    final = sum(f for _, f in results)
    fraction = hits / walks
    report = WalkReport(
        law=walk,
        status=status,
        r=r,
        full_measure=full_measure,
        hit_fraction=fraction,
        standard_error=math.sqrt(fraction * (1 - fraction) / walks),
        walks=walks,
        horizon=horizon,
        drift=final / (walks * horizon),
        seed=seed,
    )
    logger.info(f"🎲 walk: {status}, hit fraction {fraction:.5f} ± {report.standard_error:.5f}")
    return report


# Largest half-width of a Lipschitz window, in nodes
LIPSCHITZ_RADIUS = 256


def _lipschitz_batch(task) -> Dict[str, MarginTracker]:
    params, settings, level, resolution, batch_id, count = task
    n, M = params.n, params.M
    rng = generator(settings.seed, "lipschitz", batch_id)
    lam = anisotropy(settings.stencil, n)
    bound = math.log10(lam * params.growth)
    span = M**resolution
    fit = int((settings.node_budget ** (1.0 / n) - 1) // 2)
    largest = max(1, min(LIPSCHITZ_RADIUS, fit, span))

    parts = []
    remaining = count
    while remaining > 0:
        targets = min(settings.targets_per_source, remaining)
        remaining -= targets
        tracker = MarginTracker()
        x = tuple(int(c) for c in rng.integers(0, span + 1, size=n))
        radius = max(1, int(round(math.exp(rng.uniform(0.0, math.log(largest))))))
        lo = tuple(max(c - radius, 0) for c in x)
        hi = tuple(min(c + radius, span) for c in x)
        try:
            grid = build_weighted_grid(
                params, GridSpec(level, resolution, settings.stencil, (lo, hi)), settings.node_budget
            )
        except ResourceBudgetError as e:
            logger.warning(f"lipschitz: sample skipped, {e}")
            tracker.skip(targets)
            parts.append({"upper": tracker})
            continue
        dist = grid.distances_from(x)
        for _ in range(targets):
            y = tuple(int(rng.integers(l, h + 1)) for l, h in zip(lo, hi))
            if y == x:
                continue
            length = math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y))) / span
            tracker.add(upper_margin(float(dist[grid.index_of(y)]), bound + math.log10(length)))
        parts.append({"upper": tracker})
    return merge_trackers(parts)


def lipschitz_check(params: Params, settings, level: int = 2, resolution: int = 4) -> BoundsReport:
    """
    Sampled check that the capped construction is Lipschitz:
    graph d_m(x,y) <= lambda (M-2n+1) |x-y|.

    Args:
        params: Capped construction parameters (L >= M)
        settings: SampleSettings for counts, seed, stencil and budget
        level: Weight level m
        resolution: Grid resolution K >= m
    """
    if not params.capped:
        raise DomainError("lipschitz_check needs the capped construction")
    logger.info(f"📏 lipschitz: {settings.count} pairs at m={level}, K={resolution}")
    tasks = [
        (params, settings, level, resolution, b, c) for b, c in batches(settings.count, settings.batch_size)
    ]
    trackers = merge_trackers(parallel_map(_lipschitz_batch, tasks, settings.workers))
    return BoundsReport.from_trackers(
        check="lipschitz",
        params=params.describe(),
        trackers=trackers,
        seed=settings.seed,
        slack="lambda",
        lam=anisotropy(settings.stencil, params.n),
        details={"level": level, "resolution": resolution, "constant": params.growth},
    )
