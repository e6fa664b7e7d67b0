"""
Weight Core
M-adic cube combinatorics and exact evaluation of the conformal weights rho_k
"""

import math
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from functools import lru_cache, reduce
from itertools import product
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from qsmetric.config import DEFAULT_NODE_BUDGET
from qsmetric.errors import ConsistencyError, DomainError, ResourceBudgetError

Offset = Tuple[int, ...]
Face = Tuple[int, ...]

# Largest index range the vectorised code handles in int64
MAX_INDEX = 2**62


def _rational_power(base: int, exponent: Fraction) -> Fraction:
    """Exact base**exponent, or DomainError when the result is irrational."""
    p, q = exponent.numerator, exponent.denominator
    target = Fraction(base) ** p
    if q == 1:
        return target
    num, den = target.numerator, target.denominator
    roots = []
    for value in (num, den):
        guess = round(value ** (1.0 / q))
        root = next((r for r in (guess - 1, guess, guess + 1) if r > 0 and r**q == value), None)
        if root is None:
            raise DomainError(f"{base}^{exponent} is not rational; give L directly")
        roots.append(root)
    return Fraction(roots[0], roots[1])


@dataclass(frozen=True)
class Params:
    """
    Construction parameters.

    Args:
        n: Dimension (>= 2)
        M: Subdivision arity (> 2n)
        L: Attenuation factor (> 1, exact rational)
        capped: Select the capped construction (requires L >= M)
        beta: Exponent with L = M^beta when the parameters came from a plan
    """

    n: int
    M: int
    L: Fraction
    capped: bool = False
    beta: Optional[Fraction] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "L", Fraction(self.L))
        if self.n < 2:
            raise DomainError(f"n must be at least 2, got {self.n}")
        if self.M <= 2 * self.n:
            raise DomainError(f"M must exceed 2n = {2 * self.n}, got {self.M}")
        if self.L <= 1:
            raise DomainError(f"L must exceed 1, got {self.L}")
        if self.capped and self.L < self.M:
            raise DomainError(f"capped construction needs L >= M, got L={self.L}, M={self.M}")

    @classmethod
    def from_beta(cls, n: int, M: int, beta, capped: bool = False) -> "Params":
        """Build parameters with L = M^beta."""
        beta = Fraction(beta)
        if beta <= 0:
            raise DomainError(f"beta must be positive, got {beta}")
        return cls(n=n, M=M, L=_rational_power(M, beta), capped=capped, beta=beta)

    @property
    def growth(self) -> int:
        """The P2 multiplier M - 2n + 1."""
        return self.M - 2 * self.n + 1

    @property
    def R(self) -> Fraction:
        return self.L * self.growth

    def with_capped(self, capped: bool) -> "Params":
        return Params(self.n, self.M, self.L, capped, self.beta)

    def describe(self) -> Dict[str, object]:
        info = {"n": self.n, "M": self.M, "L": str(self.L), "capped": self.capped, "R": str(self.R)}
        if self.beta is not None:
            info["beta"] = str(self.beta)
        return info


class Zone(IntEnum):
    P1 = 1
    P2 = 2
    P3 = 3


def _check_offset(params: Params, child_offset: Sequence[int]) -> Offset:
    offset = tuple(int(c) for c in child_offset)
    if len(offset) != params.n:
        raise DomainError(f"offset {offset} must have {params.n} coordinates")
    if any(c < 0 or c >= params.M for c in offset):
        raise DomainError(f"offset {offset} outside [0, {params.M})")
    return offset


def zone_of_child(params: Params, child_offset: Sequence[int]) -> Zone:
    """
    Classify a child cube by its offset inside the parent.

    Ring 0 touches the parent boundary (P1). A ring-j cell lies at cell distance
    j - 1 from ring 0, so it is P2 while j - 1 < n - 1 and P3 afterwards.

    Args:
        params: Construction parameters
        child_offset: n integers in [0, M)

    Returns:
        The zone of the child
    """
    offset = _check_offset(params, child_offset)
    ring = min(min(c, params.M - 1 - c) for c in offset)
    if ring == 0:
        return Zone.P1
    if ring - 1 < params.n - 1:
        return Zone.P2
    return Zone.P3


@lru_cache(maxsize=64)
def zone_table(n: int, M: int) -> np.ndarray:
    """Zones of all M^n children as an int8 array indexed by offset."""
    idx = np.arange(M)
    ring_1d = np.minimum(idx, M - 1 - idx)
    ring = reduce(np.minimum, np.ix_(*([ring_1d] * n)))
    table = np.where(ring == 0, Zone.P1, np.where(ring - 1 < n - 1, Zone.P2, Zone.P3)).astype(np.int8)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=16)
def _ring_cells(n: int, M: int) -> Tuple[np.ndarray, np.ndarray]:
    cells = np.array(list(product(range(M), repeat=n)))
    on_ring = np.any((cells == 0) | (cells == M - 1), axis=1)
    return cells, on_ring


def zone_by_distance(params: Params, child_offset: Sequence[int]) -> Zone:
    """
    Classify a child from the set-distance definition, by brute force.

    Distances are measured in units of the child side, so the test
    d(Q, union of P1) < (n - 1) M^{-(k+1)} becomes sum(gap^2) < (n - 1)^2.
    """
    offset = np.array(_check_offset(params, child_offset))
    n, M = params.n, params.M
    cells, on_ring = _ring_cells(n, M)
    if on_ring[np.all(cells == offset, axis=1)].any():
        return Zone.P1
    gaps = np.maximum(np.abs(cells[on_ring] - offset) - 1, 0)
    dist2 = int((gaps**2).sum(axis=1).min())
    return Zone.P2 if dist2 < (n - 1) ** 2 else Zone.P3


def zone_counts(params: Params) -> Tuple[int, int, int]:
    """
    Zone sizes per parent cube.

    Returns:
        (c1, c2, c3) from the closed forms, after checking them against an
        exhaustive enumeration of zone_of_child

    Raises:
        ConsistencyError: if enumeration and closed form disagree
    """
    n, M = params.n, params.M
    closed = (M**n - (M - 2) ** n, (M - 2) ** n - (M - 2 * n) ** n, (M - 2 * n) ** n)

    counted = {Zone.P1: 0, Zone.P2: 0, Zone.P3: 0}
    for offset in product(range(M), repeat=n):
        counted[zone_of_child(params, offset)] += 1
    enumerated = (counted[Zone.P1], counted[Zone.P2], counted[Zone.P3])

    if enumerated != closed:
        raise ConsistencyError(f"zone enumeration {enumerated} != closed form {closed} for n={n}, M={M}")
    return closed


@dataclass(frozen=True)
class WeightExponents:
    """rho = (M - 2n + 1)^a * L^(-b), exactly."""

    a: int = 0
    b: int = 0
    frozen: bool = False

    def value(self, params: Params) -> Fraction:
        return Fraction(params.growth) ** self.a / params.L**self.b

    def log_value(self, params: Params) -> float:
        return self.a * math.log(params.growth) - self.b * math.log(params.L)


def weight_exponents(params: Params, digits: Iterable[Sequence[int]]) -> WeightExponents:
    """
    Weight on the interior of the cube addressed by a digit chain.

    Args:
        params: Construction parameters
        digits: Child offsets from level 0 downward, one per level

    Returns:
        Exponent pair of rho_k on the addressed cube (= r_k at its centre)
    """
    a = b = y = 0
    for digit in digits:
        zone = zone_of_child(params, digit)
        step = -1 if zone == Zone.P3 else 1
        if params.capped and y + step == 1:
            return WeightExponents(a, b, frozen=True)
        y += step
        if zone == Zone.P2:
            a += 1
        elif zone == Zone.P3:
            b += 1
    return WeightExponents(a, b)


@dataclass(frozen=True)
class CubeAddress:
    """Closed level-k cube [I_1 M^-k, (I_1+1) M^-k] x ..."""

    level: int
    index: Tuple[int, ...]

    def check(self, M: int) -> "CubeAddress":
        count = M**self.level
        if self.level < 0 or any(i < 0 or i >= count for i in self.index):
            raise DomainError(f"cube {self.index} outside level {self.level} range [0, {count})")
        return self

    def digits(self, M: int) -> List[Offset]:
        return [
            tuple((i // M ** (self.level - 1 - j)) % M for i in self.index)
            for j in range(self.level)
        ]

    @classmethod
    def from_digits(cls, digits: Sequence[Sequence[int]], M: int) -> "CubeAddress":
        index = [0] * len(digits[0]) if digits else []
        for digit in digits:
            index = [i * M + d for i, d in zip(index, digit)]
        return cls(len(digits), tuple(index))

    @classmethod
    def containing(cls, point: Sequence[Fraction], level: int, M: int) -> "CubeAddress":
        """Lexicographically smallest level-k cube containing the point."""
        count = M**level
        index = []
        for c in point:
            c = Fraction(c)
            if c < 0 or c > 1:
                raise DomainError(f"point coordinate {c} outside [0, 1]")
            index.append(min(max(math.ceil(c * count) - 1, 0), count - 1))
        return cls(level, tuple(index))

    def children(self, M: int) -> List["CubeAddress"]:
        return [
            CubeAddress(self.level + 1, tuple(i * M + d for i, d in zip(self.index, digit)))
            for digit in product(range(M), repeat=len(self.index))
        ]

    def parent(self, M: int) -> "CubeAddress":
        if self.level == 0:
            raise DomainError("the unit cube has no parent")
        return CubeAddress(self.level - 1, tuple(i // M for i in self.index))

    def neighborhood(self, M: int) -> List["CubeAddress"]:
        """All level-k cubes meeting this one (itself included)."""
        count = M**self.level
        ranges = [range(max(i - 1, 0), min(i + 2, count)) for i in self.index]
        return [CubeAddress(self.level, idx) for idx in product(*ranges)]

    def bounds(self, M: int) -> Tuple[Tuple[Fraction, ...], Tuple[Fraction, ...]]:
        side = Fraction(1, M**self.level)
        return tuple(i * side for i in self.index), tuple((i + 1) * side for i in self.index)

    def center(self, M: int) -> Tuple[Fraction, ...]:
        side = Fraction(1, M**self.level)
        return tuple((i + Fraction(1, 2)) * side for i in self.index)


def cube_weight(params: Params, cube: CubeAddress) -> WeightExponents:
    """r_k(I) for a cube address."""
    return weight_exponents(params, cube.check(params.M).digits(params.M))


def point_weight(params: Params, point: Sequence[Fraction], level: int) -> WeightExponents:
    """r_k(x), taking Q_k(x) as the lexicographically smallest containing cube."""
    return cube_weight(params, CubeAddress.containing(point, level, params.M))


def incident_cubes(params: Params, level: int, face: Face) -> List[CubeAddress]:
    """
    Level-k cubes whose closure contains a skeleton cell.

    Faces use doubled coordinates: an even entry 2j means the hyperplane
    x_i = j M^-k, an odd entry 2j+1 means the open interval (j, j+1) M^-k.
    """
    count = params.M**level
    face = tuple(int(c) for c in face)
    if len(face) != params.n or any(c < 0 or c > 2 * count for c in face):
        raise DomainError(f"face {face} is not a cell of the level-{level} grid")
    if all(c % 2 for c in face):
        raise DomainError(f"face {face} is a cube interior, not on the skeleton")
    ranges = []
    for c in face:
        if c % 2:
            ranges.append([(c - 1) // 2])
        else:
            ranges.append([i for i in (c // 2 - 1, c // 2) if 0 <= i < count])
    return [CubeAddress(level, idx) for idx in product(*ranges)]


def face_weight(params: Params, level: int, face: Face) -> WeightExponents:
    """Lower semicontinuous weight on a skeleton cell: min over incident cubes."""
    weights = [cube_weight(params, cube) for cube in incident_cubes(params, level, face)]
    return min(weights, key=lambda w: w.value(params))


class WeightField:
    """
    rho_k on a box of level-k cubes, as exponent arrays.

    Args:
        params: Construction parameters
        level: Weight level k
        lo: First cube index per axis (default 0)
        hi: One past the last cube index per axis (default M^k)
        budget: Maximum number of cubes
    """

    def __init__(
        self,
        params: Params,
        level: int,
        lo: Optional[Sequence[int]] = None,
        hi: Optional[Sequence[int]] = None,
        budget: int = DEFAULT_NODE_BUDGET,
    ):
        n, M = params.n, params.M
        count = M**level
        if level < 0 or count > MAX_INDEX:
            raise DomainError(f"level {level} outside the supported range for M={M}")
        self.params = params
        self.level = level
        self.lo = tuple(lo) if lo is not None else (0,) * n
        self.hi = tuple(hi) if hi is not None else (count,) * n
        if any(l < 0 or h > count or l >= h for l, h in zip(self.lo, self.hi)):
            raise DomainError(f"cube box {self.lo}..{self.hi} outside level {level}")

        cells = math.prod(h - l for l, h in zip(self.lo, self.hi))
        if cells > budget:
            raise ResourceBudgetError(f"weight field at level {level}", cells, budget)

        self.a, self.b, self.frozen = self._evaluate()
        self._value_table = np.array(
            [[float(Fraction(params.growth) ** a / params.L**b) for b in range(level + 1)] for a in range(level + 1)]
        )

    def _evaluate(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        params, level = self.params, self.level
        M = params.M
        table = zone_table(params.n, M)
        axes = [np.arange(l, h, dtype=np.int64) for l, h in zip(self.lo, self.hi)]
        shape = tuple(len(ax) for ax in axes)

        a = np.zeros(shape, dtype=np.int32)
        b = np.zeros(shape, dtype=np.int32)
        y = np.zeros(shape, dtype=np.int32)
        frozen = np.zeros(shape, dtype=bool)
        for j in range(level):
            scale = M ** (level - 1 - j)
            digits = [(ax // scale) % M for ax in axes]
            zone = table[np.ix_(*digits)]
            if params.capped:
                step = np.where(zone == Zone.P3, -1, 1)
                frozen |= y + step == 1
                live = ~frozen
                y = np.where(live, y + step, y)
            else:
                live = np.ones(shape, dtype=bool)
            a += live & (zone == Zone.P2)
            b += live & (zone == Zone.P3)
        return a, b, frozen

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.a.shape

    def values(self) -> np.ndarray:
        """Float weights, each the correctly rounded exact value."""
        return self._value_table[self.a, self.b]

    def exponents(self, index: Sequence[int]) -> WeightExponents:
        local = tuple(i - l for i, l in zip(index, self.lo))
        if any(i < 0 or i >= s for i, s in zip(local, self.shape)):
            return cube_weight(self.params, CubeAddress(self.level, tuple(index)))
        return WeightExponents(int(self.a[local]), int(self.b[local]), bool(self.frozen[local]))

    def distinct_exponents(self) -> List[WeightExponents]:
        pairs = set(zip(self.a.ravel().tolist(), self.b.ravel().tolist(), self.frozen.ravel().tolist()))
        weights = [WeightExponents(a, b, f) for a, b, f in pairs]
        return sorted(weights, key=lambda w: (w.value(self.params), w.a, w.b, w.frozen))


def node_cube(node: Sequence[int], resolution: int, level: int, M: int) -> CubeAddress:
    """Lexicographically smallest level-k cube containing a lattice node p M^-K."""
    if level > resolution:
        scale = M ** (level - resolution)
        count = M**level
        return CubeAddress(level, tuple(min(max(p * scale - 1, 0), count - 1) for p in node))
    scale = M ** (resolution - level)
    return CubeAddress(level, tuple(max(-(-p // scale) - 1, 0) for p in node))


def _disjoint(a: CubeAddress, b: CubeAddress) -> bool:
    return any(abs(i - j) >= 2 for i, j in zip(a.index, b.index))


def separation_level(params: Params, x: Sequence[Fraction], y: Sequence[Fraction]) -> int:
    """
    Smallest k with Q_k(x) and Q_k(y) disjoint.

    For distinct points M^-k <= |x-y|_inf and |x-y| <= 2n M^(1-k).
    """
    x = tuple(Fraction(c) for c in x)
    y = tuple(Fraction(c) for c in y)
    if x == y:
        raise DomainError("separation level needs distinct points")
    level = 0
    while not _disjoint(
        CubeAddress.containing(x, level, params.M), CubeAddress.containing(y, level, params.M)
    ):
        level += 1
    return level


def separation_level_nodes(M: int, resolution: int, a: Sequence[int], b: Sequence[int]) -> int:
    """separation_level for two lattice nodes at resolution K, in integer arithmetic."""
    if tuple(a) == tuple(b):
        raise DomainError("separation level needs distinct points")
    level = 0
    while not _disjoint(node_cube(a, resolution, level, M), node_cube(b, resolution, level, M)):
        level += 1
    return level
