"""
Construction constants
C1 bounds diameters of cube neighbourhoods, C2 the comparison of distances
inside a separating cube; eta is the resulting distortion function.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Union

from mpmath import mp, mpf

from qsmetric.config import MP_DIGITS
from qsmetric.errors import DomainError
from qsmetric.reports import log10_of
from qsmetric.weights import Params


@dataclass(frozen=True)
class Constants:
    R: Fraction
    C1: Fraction
    C2: Fraction
    log10_C1: float
    log10_C2: float

    def as_dict(self) -> Dict[str, object]:
        return {
            "R": str(self.R),
            "C1": str(self.C1),
            "C1_float": float(self.C1),
            "log10_C2": self.log10_C2,
        }


def high_precision_log10(value: Fraction) -> mpf:
    """log10 of an exact rational at MP_DIGITS precision."""
    with mp.workdps(MP_DIGITS):
        return mp.log10(mpf(value.numerator)) - mp.log10(mpf(value.denominator))


@lru_cache(maxsize=256)
def constants(params: Params) -> Constants:
    """
    Exact constants of the construction.

    Args:
        params: Construction parameters

    Returns:
        Constants with C1 and C2 as exact rationals; C2 is also given in log10
        form since it overflows floats for most parameters
    """
    n, M, G = params.n, params.M, params.growth
    R = params.R
    C1 = 2 * n * M * G * R / (1 - Fraction(G, M))
    C2 = (R ** (2 * n * M + 2) - 1) / (R - 1)
    return Constants(
        R=R,
        C1=C1,
        C2=C2,
        log10_C1=log10_of(C1),
        log10_C2=float(high_precision_log10(C2)),
    )


def continuity_modulus(params: Params, level: int) -> float:
    """
    log10 of 2nM C1 C2 ((M-2n+1)/M)^k, the bound on d(x, x') for points
    first separated at level k. Strictly decreasing in k.
    """
    if level < 0:
        raise DomainError(f"level must be nonnegative, got {level}")
    c = constants(params)
    n, M = params.n, params.M
    return (
        math.log10(2 * n * M)
        + c.log10_C1
        + c.log10_C2
        + level * math.log10(params.growth / M)
    )


class EtaCurve:
    """
    Distortion bound eta(t) for d(x,y)/d(x,z) with t = |x-y|/|x-z|.

    Below t* = 1/(2nM) the ratio decays like ((M-2n+1)/M)^(-log_M(2nMt));
    above it the bound grows like (2nMt)^2. Both branches equal the prefactor
    4 n^2 M^2 C1 C2 R at t*.
    """

    def __init__(self, params: Params):
        self.params = params
        self.constants = constants(params)
        n, M = params.n, params.M
        self.t_star = Fraction(1, 2 * n * M)
        self.log10_prefactor = (
            math.log10(4 * n * n * M * M)
            + self.constants.log10_C1
            + self.constants.log10_C2
            + log10_of(self.constants.R)
        )
        self._log10_decay = math.log10(params.growth / M)

    def log10_eta(self, t: Union[float, Fraction]) -> float:
        if t <= 0:
            raise DomainError(f"eta is defined for t > 0, got {t}")
        M = self.params.M
        u = 2 * self.params.n * M * float(t)
        small = max(0.0, -math.log(u) / math.log(M)) * self._log10_decay if u <= 1 else -math.inf
        large = 2 * math.log10(u) if u >= 1 else -math.inf
        return self.log10_prefactor + max(small, large)

    def __call__(self, t: Union[float, Fraction]) -> float:
        exponent = self.log10_eta(t)
        return math.inf if exponent > 308 else 10.0**exponent


def eta_bound(params: Params, t: Union[float, Fraction]) -> float:
    """eta(t) as a float (inf once it leaves the float range); see EtaCurve.log10_eta."""
    return EtaCurve(params)(t)
