"""
Configuration
Environment defaults and the run-configuration schema
"""

import json
import os
from typing import List, Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from qsmetric.errors import ConfigError

load_dotenv()

TOOL_VERSION = "1.0.0"

# Worker cap for sample batches
QSMETRIC_THREADS = max(1, int(os.getenv("QSMETRIC_THREADS", "1") or 1))

# Absolute slack used in every bound comparison
COMPARISON_SLACK = 1e-9

# Digits carried by mpmath evaluations
MP_DIGITS = 50

# Grids: node budget and how many levels finer than the weight level to resolve
DEFAULT_NODE_BUDGET = 4_000_000
DEFAULT_RESOLUTION_OFFSET = 2

# Parameter search for dimension plans
BETA_LADDER = (1, 3, 6, 9, 12)
ARITY_GRID = (8, 16, 32, 64)

RNG_ALGORITHM = "numpy-philox4x64-seedsequence"

EXPERIMENTS = ("verify", "qs", "dimension", "walk", "heatmap", "all")

ExperimentType = Literal["verify", "qs", "dimension", "walk", "heatmap", "all"]
Rational = Union[int, str]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ParamsConfig(_Section):
    n: int = Field(ge=2, description="Dimension of the cube")
    M: int = Field(description="Subdivision arity")
    L: Optional[Rational] = Field(default=None, description="Attenuation factor, e.g. 8 or '17/2'")
    beta: Optional[Rational] = Field(default=None, description="Exponent with L = M^beta")
    capped: bool = False

    @model_validator(mode="after")
    def _one_of_l_beta(self):
        if (self.L is None) == (self.beta is None):
            raise ValueError("give exactly one of 'L' or 'beta'")
        return self


class SamplingConfig(_Section):
    seed: int = Field(default=1, ge=0, lt=2**64)
    pairs: int = Field(default=1000, ge=1, description="two_sided and diameter node pairs")
    monotone_pairs: int = Field(default=200, ge=1)
    paths: int = Field(default=200, ge=1)
    triples: int = Field(default=10_000, ge=1)
    lipschitz_pairs: int = Field(default=1000, ge=1)
    lln_points: int = Field(default=100_000, ge=1)
    lln_steps: int = Field(default=1000, ge=1)
    km_samples: int = Field(default=4000, ge=10)
    targets_per_source: int = Field(default=10, ge=1)
    batch_size: int = Field(default=50, ge=1)


class BudgetConfig(_Section):
    max_nodes: int = Field(default=DEFAULT_NODE_BUDGET, ge=4)
    max_weight_level: int = Field(default=3, ge=0)
    resolution_offset: int = Field(default=DEFAULT_RESOLUTION_OFFSET, ge=0)
    qs_levels: int = Field(default=1, ge=1)
    km_max_level: int = Field(default=2**16, ge=1)
    lipschitz_level: int = Field(default=2, ge=0)
    lipschitz_resolution: int = Field(default=4, ge=0)
    heatmap_cells: int = Field(default=512 * 512, ge=1)


class DimensionConfig(_Section):
    alpha: float = Field(default=1.1, gt=0)
    beta: Optional[Rational] = None
    m_max: int = Field(default=8, ge=1)
    m_empirical: int = Field(default=3, ge=0)


class WalkConfig(_Section):
    walks: int = Field(default=100_000, ge=1)
    horizon: int = Field(default=10_000, ge=1)


class HeatmapConfig(_Section):
    level: int = Field(default=2, ge=0)
    slice: List[int] = Field(default_factory=list, description="Fixed cube indices for axes 3..n")
    capped: Optional[bool] = None


class OutputConfig(_Section):
    directory: str = "out"
    csv: bool = True
    svg: bool = True


class RunConfig(_Section):
    params: ParamsConfig
    experiment: ExperimentType = "all"
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    budgets: BudgetConfig = Field(default_factory=BudgetConfig)
    dimension: DimensionConfig = Field(default_factory=DimensionConfig)
    walk: WalkConfig = Field(default_factory=WalkConfig)
    heatmap: HeatmapConfig = Field(default_factory=HeatmapConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _alpha_below_dimension(self):
        if self.dimension.alpha >= self.params.n:
            raise ValueError(f"dimension.alpha must lie in (0, {self.params.n}), got {self.dimension.alpha}")
        return self


def parse_run_config(text: str) -> RunConfig:
    """
    Parse and validate a JSON run configuration.

    Args:
        text: JSON document

    Returns:
        Validated RunConfig with every default filled in

    Raises:
        ConfigError: on malformed JSON or schema violations
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            "config is not valid JSON",
            [{"line": e.lineno, "column": e.colno, "message": e.msg}],
        ) from e

    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        diagnostics = []
        for err in e.errors():
            field = ".".join(str(part) for part in err["loc"]) or "<root>"
            diagnostics.append({"field": field, "message": err["msg"]})
        raise ConfigError("config failed validation", diagnostics) from e


def load_run_config(path: str) -> RunConfig:
    """Read and validate a run configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}", [{"field": "--config", "message": str(e)}]) from e
    return parse_run_config(text)
