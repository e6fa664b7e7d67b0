"""
Weight Heatmap
Renders rho_k on the level-k cubes of a 2-D slice as an SVG.
"""

import logging
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import PatchCollection  # noqa: E402
from matplotlib.patches import Patch, Rectangle  # noqa: E402

from qsmetric.config import TOOL_VERSION  # noqa: E402
from qsmetric.errors import DomainError, ResourceBudgetError  # noqa: E402
from qsmetric.utils import ensure_dir  # noqa: E402
from qsmetric.weights import Params, WeightExponents, WeightField  # noqa: E402

logger = logging.getLogger("qsmetric.heatmap")

plt.rcParams["svg.hashsalt"] = "qsmetric"
plt.rcParams["svg.fonttype"] = "none"

DEFAULT_CELL_BUDGET = 512 * 512


@dataclass
class HeatmapSummary:
    path: str
    level: int
    cells: int
    counts: Dict[str, int]

    def to_record(self) -> Dict[str, object]:
        return {"path": self.path, "level": self.level, "cells": self.cells, "counts": self.counts}


def _label(params: Params, weight: WeightExponents) -> str:
    mark = " frozen" if weight.frozen else ""
    return f"(a={weight.a}, b={weight.b}){mark}: {weight.value(params)}"


def heatmap_field(
    params: Params, level: int, slice_spec: Sequence[int] = (), budget: int = DEFAULT_CELL_BUDGET
) -> WeightField:
    """
    Weight field on the 2-D slice x_3..x_n fixed to the given cube indices.

    Raises:
        DomainError: if the slice does not fix exactly n - 2 axes
        ResourceBudgetError: if M^(2k) cells exceed the budget
    """
    n, M = params.n, params.M
    count = M**level
    if len(slice_spec) != n - 2:
        raise DomainError(f"slice must fix {n - 2} axes for n={n}, got {len(slice_spec)}")
    if any(i < 0 or i >= count for i in slice_spec):
        raise DomainError(f"slice {tuple(slice_spec)} outside level {level}")
    cells = count * count
    if cells > budget:
        raise ResourceBudgetError(f"heatmap at level {level}; choose a smaller k", cells, budget)
    lo = (0, 0) + tuple(slice_spec)
    hi = (count, count) + tuple(i + 1 for i in slice_spec)
    return WeightField(params, level, lo, hi, budget=budget)


def emit_heatmap(
    params: Params,
    level: int,
    path: str,
    slice_spec: Sequence[int] = (),
    budget: int = DEFAULT_CELL_BUDGET,
) -> HeatmapSummary:
    """
    Write an SVG with one rectangle per level-k cell, coloured on a log scale
    of the weight, and a legend of the exact exponent pairs.

    Args:
        params: Construction parameters
        level: Weight level k
        path: Output SVG path
        slice_spec: Cube indices fixing axes 3..n
        budget: Cell budget

    Returns:
        HeatmapSummary with the cell count per exponent pair
    """
    field = heatmap_field(params, level, slice_spec, budget)
    a = field.a.reshape(field.shape[:2])
    b = field.b.reshape(field.shape[:2])
    frozen = field.frozen.reshape(field.shape[:2])
    weights = field.distinct_exponents()

    logs = [w.log_value(params) for w in weights]
    low, high = min(logs), max(logs)
    cmap = plt.get_cmap("viridis")

    def colour(w: WeightExponents):
        position = 0.5 if math.isclose(high, low) else (w.log_value(params) - low) / (high - low)
        return cmap(position)

    colours = {(w.a, w.b, w.frozen): colour(w) for w in weights}
    count = a.shape[0]
    rectangles: List[Rectangle] = []
    faces = []
    for i in range(count):
        for j in range(count):
            key = (int(a[i, j]), int(b[i, j]), bool(frozen[i, j]))
            rectangles.append(Rectangle((i, j), 1, 1))
            faces.append(colours[key])

    fig, ax = plt.subplots(figsize=(8, 8))
    ax.add_collection(PatchCollection(rectangles, facecolors=faces, edgecolors="none"))
    ax.set_xlim(0, count)
    ax.set_ylim(0, count)
    ax.set_aspect("equal")
    ax.set_xlabel(f"cube index I_1 (level {level})")
    ax.set_ylabel(f"cube index I_2 (level {level})")
    title = f"rho_{level}  n={params.n} M={params.M} L={params.L}"
    if params.capped:
        title += " capped"
    if slice_spec:
        title += f" slice={tuple(slice_spec)}"
    ax.set_title(title)
    handles = [Patch(facecolor=colours[(w.a, w.b, w.frozen)], label=_label(params, w)) for w in weights]
    ax.legend(handles=handles, loc="upper left", bbox_to_anchor=(1.02, 1.0), fontsize="small")

    ensure_dir(os.path.dirname(path) or ".")
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None, "Creator": f"qsmetric {TOOL_VERSION}"})
    plt.close(fig)

    counts: Dict[str, int] = {}
    for w in weights:
        mask = (a == w.a) & (b == w.b) & (frozen == w.frozen)
        counts[f"{w.a},{w.b}{',frozen' if w.frozen else ''}"] = int(mask.sum())
    logger.info(f"🗺️  Heatmap written to {path} ({count * count} cells, {len(weights)} weights)")
    return HeatmapSummary(path=path, level=level, cells=count * count, counts=counts)


def capped_difference(params: Params, level: int, slice_spec: Sequence[int] = ()) -> Optional[int]:
    """Number of cells whose weight changes between the uncapped and capped construction."""
    if params.L < params.M:
        return None
    plain = heatmap_field(params.with_capped(False), level, slice_spec)
    capped = heatmap_field(params.with_capped(True), level, slice_spec)
    return int(((plain.a != capped.a) | (plain.b != capped.b)).sum())
