"""
Check reports
Margins are ratios oriented so that >= 1 means the bound holds; they are
accumulated as log10 values because the constants involved overflow floats.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Iterable, Optional, Union

from qsmetric.config import COMPARISON_SLACK, RNG_ALGORITHM

Real = Union[float, int, Fraction]

PASS_LOG10 = math.log10(1.0 - COMPARISON_SLACK)


def log10_of(value: Real) -> float:
    """log10 of a positive real, exact-input safe for huge rationals."""
    if isinstance(value, Fraction):
        return math.log10(value.numerator) - math.log10(value.denominator)
    if value <= 0:
        return -math.inf
    return math.log10(value)


def lower_margin(observed: Real, bound_log10: float) -> float:
    """log10(observed / bound) for a check of the form observed >= bound."""
    return log10_of(observed) - bound_log10


def upper_margin(observed: Real, bound_log10: float) -> float:
    """log10(bound / observed) for a check of the form observed <= bound."""
    if observed <= 0:
        return math.inf
    return bound_log10 - log10_of(observed)


class MarginTracker:
    """Running worst margin over a stream of comparisons."""

    def __init__(self):
        self.worst = math.inf
        self.count = 0
        self.inconclusive = 0

    def add(self, log_margin: float):
        self.count += 1
        if log_margin < self.worst:
            self.worst = log_margin

    def skip(self, count: int = 1):
        self.inconclusive += count

    def merge(self, other: "MarginTracker") -> "MarginTracker":
        self.worst = min(self.worst, other.worst)
        self.count += other.count
        self.inconclusive += other.inconclusive
        return self

    @property
    def passed(self) -> bool:
        return self.count > 0 and self.worst >= PASS_LOG10

    def summary(self) -> Dict[str, Any]:
        return {
            "N": self.count,
            "inconclusive": self.inconclusive,
            "worst_log10_margin": self.worst if self.count else None,
            "pass": self.passed,
        }


@dataclass
class BoundsReport:
    check: str
    params: Dict[str, Any]
    sample_count: int
    worst_log10_margin: Optional[float]
    passed: bool
    seed: int
    slack: str = "none"
    lam: float = 1.0
    inconclusive: int = 0
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def worst_margin(self) -> Optional[float]:
        if self.worst_log10_margin is None or not math.isfinite(self.worst_log10_margin):
            return None
        if self.worst_log10_margin > 300:
            return None
        return 10.0**self.worst_log10_margin

    @classmethod
    def from_trackers(
        cls,
        check: str,
        params: Dict[str, Any],
        trackers: Dict[str, MarginTracker],
        seed: int,
        slack: str = "none",
        lam: float = 1.0,
        details: Optional[Dict[str, Any]] = None,
    ) -> "BoundsReport":
        """Combine one or more tracked sides into a single report."""
        total = MarginTracker()
        for tracker in trackers.values():
            total.merge(tracker)
        info = dict(details or {})
        if len(trackers) > 1:
            info["sides"] = {name: tracker.summary() for name, tracker in trackers.items()}
        passed = all(t.passed for t in trackers.values()) and total.inconclusive == 0
        return cls(
            check=check,
            params=params,
            sample_count=total.count,
            worst_log10_margin=total.worst if total.count else None,
            passed=passed,
            seed=seed,
            slack=slack,
            lam=lam,
            inconclusive=total.inconclusive,
            details=info,
        )

    def to_record(self) -> Dict[str, Any]:
        return {
            "check": self.check,
            "params": self.params,
            "N": self.sample_count,
            "seed": self.seed,
            "rng": RNG_ALGORITHM,
            "worst_margin": self.worst_margin,
            "worst_log10_margin": self.worst_log10_margin,
            "pass": self.passed,
            "slack": self.slack,
            "lambda": self.lam,
            "inconclusive": self.inconclusive,
            "details": self.details,
        }


def merge_trackers(parts: Iterable[Dict[str, MarginTracker]]) -> Dict[str, MarginTracker]:
    """Merge per-batch tracker dictionaries, keyed by side name."""
    merged: Dict[str, MarginTracker] = {}
    for part in parts:
        for name, tracker in part.items():
            merged.setdefault(name, MarginTracker()).merge(tracker)
    return dict(sorted(merged.items()))
