"""
Metric Engine
Weighted grid graphs whose shortest paths approximate the path metrics d_k,
and the level-by-level approximation of the limit metric d.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import ConvexHull

from qsmetric.config import DEFAULT_NODE_BUDGET, DEFAULT_RESOLUTION_OFFSET
from qsmetric.constants import constants
from qsmetric.errors import DomainError, ResourceBudgetError
from qsmetric.weights import (
    MAX_INDEX,
    CubeAddress,
    Params,
    WeightField,
    cube_weight,
    point_weight,
    separation_level,
)

logger = logging.getLogger("qsmetric.grid")

Node = Tuple[int, ...]
Window = Tuple[Node, Node]


class Stencil(str, Enum):
    AXIS = "axis"
    DIAGONAL = "axis+diagonal"
    EXTENDED = "extended"


@lru_cache(maxsize=None)
def stencil_offsets(stencil: Stencil, n: int) -> np.ndarray:
    """One representative of each +-v pair of stencil steps (first nonzero entry positive)."""
    stencil = Stencil(stencil)
    span = 2 if stencil == Stencil.EXTENDED else 1
    steps = []
    for v in product(range(-span, span + 1), repeat=n):
        if not any(v) or math.gcd(*v) != 1:
            continue
        if next(c for c in v if c) < 0:
            continue
        if stencil == Stencil.AXIS and sum(abs(c) for c in v) != 1:
            continue
        steps.append(v)
    offsets = np.array(steps, dtype=np.int64)
    offsets.setflags(write=False)
    return offsets


@lru_cache(maxsize=None)
def anisotropy(stencil: Stencil, n: int) -> float:
    """
    Worst ratio of stencil-path length to Euclidean length over all directions.

    The cheapest stencil decomposition of a unit direction is the gauge of the
    convex hull of the normalised steps, so the worst ratio is one over the
    hull's inradius.
    """
    half = stencil_offsets(Stencil(stencil), n).astype(float)
    steps = np.vstack([half, -half])
    unit = steps / np.linalg.norm(steps, axis=1, keepdims=True)
    hull = ConvexHull(unit)
    return float(1.0 / np.min(-hull.equations[:, -1]))


@dataclass(frozen=True)
class GridSpec:
    """
    Args:
        weight_level: k, the weight rho_k carried by the edges
        resolution_level: K >= k, lattice spacing M^-K
        stencil: Edge neighbourhood
        window: Inclusive node box (lo, hi); None means the whole cube
    """

    weight_level: int
    resolution_level: int
    stencil: Stencil = Stencil.DIAGONAL
    window: Optional[Window] = None

    def __post_init__(self):
        object.__setattr__(self, "stencil", Stencil(self.stencil))
        if self.weight_level < 0:
            raise DomainError(f"weight level must be nonnegative, got {self.weight_level}")
        if self.resolution_level < self.weight_level:
            raise DomainError(
                f"resolution level {self.resolution_level} below weight level {self.weight_level}"
            )


@dataclass(frozen=True)
class MetricEstimate:
    value: float
    lower_bound: float
    upper_bound: float
    converged: bool
    levels_used: int
    windowed: bool = False

    def to_record(self) -> Dict[str, object]:
        return {
            "value": self.value,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "converged": self.converged,
            "levels_used": self.levels_used,
            "windowed": self.windowed,
        }


class WeightedGrid:
    """Immutable grid graph on a box of V_K carrying d_k edge weights."""

    def __init__(
        self,
        params: Params,
        spec: GridSpec,
        lo: Node,
        shape: Tuple[int, ...],
        matrix: csr_matrix,
        field: WeightField,
    ):
        self.params = params
        self.spec = spec
        self.lo = lo
        self.shape = shape
        self.matrix = matrix
        self.field = field

    @property
    def node_count(self) -> int:
        return math.prod(self.shape)

    @property
    def edge_count(self) -> int:
        return int(self.matrix.nnz)

    @property
    def lam(self) -> float:
        return anisotropy(self.spec.stencil, self.params.n)

    @property
    def windowed(self) -> bool:
        full = self.params.M**self.spec.resolution_level + 1
        return any(s != full for s in self.shape)

    @property
    def hi(self) -> Node:
        return tuple(l + s - 1 for l, s in zip(self.lo, self.shape))

    def contains(self, node: Sequence[int]) -> bool:
        return all(l <= p < l + s for p, l, s in zip(node, self.lo, self.shape))

    def index_of(self, node: Sequence[int]) -> int:
        if len(node) != self.params.n or not self.contains(node):
            raise DomainError(f"node {tuple(node)} is not in the grid box {self.lo}..{self.hi}")
        return int(np.ravel_multi_index(tuple(p - l for p, l in zip(node, self.lo)), self.shape))

    def node_of(self, index: int) -> Node:
        local = np.unravel_index(index, self.shape)
        return tuple(int(i) + l for i, l in zip(local, self.lo))

    def distances_from(self, source: Sequence[int]) -> np.ndarray:
        """Single-source shortest path lengths to every node, in index order."""
        return dijkstra(self.matrix, directed=False, indices=self.index_of(source))

    def distance(self, x: Sequence[int], y: Sequence[int]) -> float:
        if tuple(x) == tuple(y):
            self.index_of(x)
            return 0.0
        return float(self.distances_from(x)[self.index_of(y)])


def edge_factors(
    values: np.ndarray,
    cube_lo: Sequence[int],
    scale: int,
    cells: int,
    start: Sequence[np.ndarray],
    end: Sequence[np.ndarray],
) -> np.ndarray:
    """
    Weight factor of each lattice segment: the minimum weight over the level-k
    cubes whose closure contains the whole segment, inf if there is none.

    Args:
        values: Weights on a box of level-k cubes
        cube_lo: First cube index of that box per axis
        scale: Nodes per cube side, M^(K-k)
        cells: Cubes per axis at level k, M^k
        start: Segment start coordinates, one array per axis
        end: Segment end coordinates, one array per axis
    """
    first_idx, last_idx = [], []
    valid = np.ones(start[0].shape, dtype=bool)
    for axis, (a, b) in enumerate(zip(start, end)):
        low = np.minimum(a, b)
        high = np.maximum(a, b)
        first = np.maximum(-(-high // scale) - 1, 0)
        last = np.minimum(low // scale, cells - 1)
        valid &= first <= last
        top = values.shape[axis] - 1
        first_idx.append(np.clip(first - cube_lo[axis], 0, top))
        last_idx.append(np.clip(last - cube_lo[axis], 0, top))

    factor = np.full(start[0].shape, np.inf)
    for choice in product((False, True), repeat=len(start)):
        idx = tuple(l if c else f for c, f, l in zip(choice, first_idx, last_idx))
        np.minimum(factor, values[idx], out=factor)
    factor[~valid] = np.inf
    return factor


def build_weighted_grid(params: Params, spec: GridSpec, budget: int = DEFAULT_NODE_BUDGET) -> WeightedGrid:
    """
    Build the grid graph on V_K (or a window of it) with d_k edge lengths.

    Edges run along the stencil; a step is kept only when its segment lies in
    one closed level-k cube, and it costs the minimum weight over the cubes that
    contain it (the lower semicontinuous value on skeleton segments) times its
    Euclidean length.

    Raises:
        ResourceBudgetError: if the node count exceeds the budget
    """
    n, M = params.n, params.M
    k, K = spec.weight_level, spec.resolution_level
    span = M**K
    if span > MAX_INDEX:
        raise DomainError(f"resolution level {K} outside the supported range for M={M}")

    lo, hi = spec.window if spec.window is not None else ((0,) * n, (span,) * n)
    lo, hi = tuple(int(c) for c in lo), tuple(int(c) for c in hi)
    if len(lo) != n or len(hi) != n or any(l < 0 or h > span or l > h for l, h in zip(lo, hi)):
        raise DomainError(f"window {lo}..{hi} is not a box of V_{K}")
    shape = tuple(h - l + 1 for l, h in zip(lo, hi))
    nodes = math.prod(shape)
    if nodes > budget:
        raise ResourceBudgetError(f"grid k={k}, K={K}", nodes, budget)

    scale = M ** (K - k)
    cells = M**k
    cube_lo = tuple(max(l // scale - 1, 0) for l in lo)
    cube_hi = tuple(min(h // scale + 1, cells) for h in hi)
    field = WeightField(params, k, cube_lo, cube_hi, budget=budget)
    values = field.values()

    sources, targets, weights = [], [], []
    for step in stencil_offsets(spec.stencil, n):
        ranges = []
        for l, h, c in zip(lo, hi, step):
            first, last = l + max(0, -int(c)), h - max(0, int(c))
            if first > last:
                break
            ranges.append(np.arange(first, last + 1, dtype=np.int64))
        if len(ranges) < n:
            continue
        start = [g.ravel() for g in np.meshgrid(*ranges, indexing="ij")]
        end = [s + int(c) for s, c in zip(start, step)]
        factor = edge_factors(values, cube_lo, scale, cells, start, end)
        keep = np.isfinite(factor)
        length = math.sqrt(int(np.dot(step, step))) / span
        sources.append(np.ravel_multi_index(tuple(s[keep] - l for s, l in zip(start, lo)), shape))
        targets.append(np.ravel_multi_index(tuple(e[keep] - l for e, l in zip(end, lo)), shape))
        weights.append(factor[keep] * length)

    matrix = csr_matrix(
        (np.concatenate(weights), (np.concatenate(sources), np.concatenate(targets))),
        shape=(nodes, nodes),
    )
    logger.debug(f"Built grid k={k} K={K} window={lo}..{hi}: {nodes} nodes, {matrix.nnz} edges")
    return WeightedGrid(params, spec, lo, shape, matrix, field)


def shortest_distance(grid: WeightedGrid, x: Sequence[int], y: Sequence[int]) -> MetricEstimate:
    """
    Graph distance between two grid nodes.

    On a full grid the true d_k lies in [value / lambda, value]. A windowed grid
    only admits paths inside the window, so it keeps the upper bound alone.
    """
    value = grid.distance(x, y)
    lower = 0.0 if grid.windowed else value / grid.lam
    return MetricEstimate(
        value=value,
        lower_bound=lower,
        upper_bound=value,
        converged=True,
        levels_used=grid.spec.weight_level,
        windowed=grid.windowed,
    )


def node_box(cube: CubeAddress, resolution: int, M: int) -> Window:
    """Inclusive node box of a closed cube at resolution K."""
    scale = M ** (resolution - cube.level)
    return tuple(i * scale for i in cube.index), tuple((i + 1) * scale for i in cube.index)


def neighborhood_box(cube: CubeAddress, resolution: int, M: int) -> Window:
    """Inclusive node box of Q*_k(I)."""
    boxes = [node_box(c, resolution, M) for c in cube.neighborhood(M)]
    return union_box(boxes)


def union_box(boxes: Sequence[Window]) -> Window:
    lo = tuple(min(b[0][i] for b in boxes) for i in range(len(boxes[0][0])))
    hi = tuple(max(b[1][i] for b in boxes) for i in range(len(boxes[0][1])))
    return lo, hi


def box_size(box: Window) -> int:
    return math.prod(h - l + 1 for l, h in zip(*box))


def lattice_level(point: Sequence[Fraction], M: int, limit: int = 64) -> int:
    """Smallest j with the point in V_j."""
    for level in range(limit + 1):
        if all((Fraction(c) * M**level).denominator == 1 for c in point):
            return level
    raise DomainError(f"point {tuple(point)} is not an M-adic lattice point")


def point_to_node(point: Sequence[Fraction], resolution: int, M: int) -> Node:
    node = []
    for c in point:
        p = Fraction(c) * M**resolution
        if p.denominator != 1 or p < 0 or p > M**resolution:
            raise DomainError(f"point {tuple(point)} is not a node of V_{resolution}")
        node.append(int(p))
    return tuple(node)


def node_to_point(node: Sequence[int], resolution: int, M: int) -> Tuple[Fraction, ...]:
    return tuple(Fraction(p, M**resolution) for p in node)


def serialize_node(node: Sequence[int], resolution: int) -> List[List[int]]:
    """Node coordinates as (p, K) pairs, p / M^K per axis."""
    return [[int(p), resolution] for p in node]


def euclidean(x: Sequence[Fraction], y: Sequence[Fraction]) -> float:
    return math.sqrt(float(sum((Fraction(a) - Fraction(b)) ** 2 for a, b in zip(x, y))))


def lemma_lower_bound(params: Params, x: Sequence[Fraction], y: Sequence[Fraction]) -> float:
    """r_k(x)|x-y| / (2nMR) with k the separation level; a lower bound for every d_m, m >= k."""
    level = separation_level(params, x, y)
    r = point_weight(params, x, level).value(params)
    return float(r / (2 * params.n * params.M * params.R)) * euclidean(x, y)


def limit_distance(
    params: Params,
    x: Sequence[Fraction],
    y: Sequence[Fraction],
    tol: float,
    max_level: int,
    stencil: Stencil = Stencil.DIAGONAL,
    resolution_offset: int = DEFAULT_RESOLUTION_OFFSET,
    budget: int = DEFAULT_NODE_BUDGET,
) -> MetricEstimate:
    """
    Approximate the limit metric d(x, y) for lattice points of V_j.

    Graph distances are computed at weight levels k = j, j+1, ... up to
    max_level on the neighbourhood of the cube where x and y first separate.
    The tail beyond level k is bounded by C1 r_j(x) |x-y| ((M-2n+1)/M)^(k-j).

    Args:
        params: Construction parameters
        x: First point (exact rationals)
        y: Second point (exact rationals)
        tol: Convergence tolerance on the tail bound or successive values
        max_level: Deepest weight level to attempt
        stencil: Grid stencil
        resolution_offset: K - k for each grid
        budget: Node budget per grid

    Returns:
        MetricEstimate; converged is False when the level cap or the budget
        stopped the iteration first
    """
    if tol <= 0:
        raise DomainError(f"tol must be positive, got {tol}")
    x = tuple(Fraction(c) for c in x)
    y = tuple(Fraction(c) for c in y)
    M = params.M
    j = max(lattice_level(x, M), lattice_level(y, M))
    if x == y:
        return MetricEstimate(0.0, 0.0, 0.0, True, j)

    lower = lemma_lower_bound(params, x, y)
    window_level = max(separation_level(params, x, y) - 1, 0)
    window_cube = CubeAddress.containing(x, window_level, M)
    windowed = window_level > 0

    c1 = float(constants(params).C1)
    r_j = float(point_weight(params, x, j).value(params))
    decay = params.growth / M
    distance = euclidean(x, y)

    estimate = None
    previous = None
    for k in range(j, max_level + 1):
        K = k + resolution_offset
        window = neighborhood_box(window_cube, K, M) if windowed else None
        try:
            grid = build_weighted_grid(params, GridSpec(k, K, stencil, window), budget)
        except ResourceBudgetError as e:
            logger.warning(f"limit_distance stopped at level {k}: {e}")
            break
        value = grid.distance(point_to_node(x, K, M), point_to_node(y, K, M))
        if not grid.windowed:
            lower = max(lower, value / grid.lam)
        tail = c1 * r_j * distance * decay ** (k - j)
        converged = tail < tol or (previous is not None and abs(value - previous) < tol)
        estimate = MetricEstimate(value, min(lower, value), value + tail, converged, k, grid.windowed)
        if converged:
            return estimate
        previous = value

    if estimate is None:
        return MetricEstimate(lower, lower, math.inf, False, j - 1, windowed)
    return estimate


def analytic_diameter(params: Params, cube: CubeAddress) -> Fraction:
    """2n C1 r_k(I) M^-k, exact."""
    r = cube_weight(params, cube).value(params)
    return 2 * params.n * constants(params).C1 * r / params.M**cube.level


def boundary_nodes(box: Window) -> List[Node]:
    """Lattice nodes on the boundary of a node box, in lexicographic order."""
    lo, hi = box
    ranges = [range(l, h + 1) for l, h in zip(lo, hi)]
    return [
        node
        for node in product(*ranges)
        if any(p == l or p == h for p, l, h in zip(node, lo, hi))
    ]


def cube_diameter(
    params: Params,
    cube: CubeAddress,
    method: str = "analytic",
    sample: int = 64,
    stencil: Stencil = Stencil.DIAGONAL,
    budget: int = DEFAULT_NODE_BUDGET,
) -> float:
    """
    d-diameter of a cube.

    Args:
        params: Construction parameters
        cube: The cube
        method: 'analytic' for the bound 2n C1 r_k(I) M^-k, 'graph' for the
            largest graph distance between sampled boundary nodes at K = k+2
        sample: Boundary nodes used by the graph method (evenly spaced)
        stencil: Grid stencil for the graph method
        budget: Node budget for the graph method

    Returns:
        The diameter estimate
    """
    cube.check(params.M)
    if method == "analytic":
        return float(analytic_diameter(params, cube))
    if method != "graph":
        raise DomainError(f"unknown diameter method: {method}")

    K = cube.level + 2
    box = node_box(cube, K, params.M)
    grid = build_weighted_grid(params, GridSpec(cube.level + 1, K, stencil, box), budget)
    nodes = boundary_nodes(box)
    stride = max(1, len(nodes) // sample)
    chosen = [grid.index_of(node) for node in nodes[::stride][:sample]]
    table = dijkstra(grid.matrix, directed=False, indices=chosen)
    return float(table[:, chosen].max())
