"""
Experiment Runner
Coordinates the experiments of one run:
1. verify    - zone counts, ratio bound, distance lemmas, constants
2. qs        - quasisymmetry scatter against eta
3. dimension - parameter plan, LLN, k_m and content chain
4. walk      - hitting probability of the capped walk, Lipschitz check
5. heatmap   - SVG of the weight field
"""

import logging
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from mpmath import mp

from qsmetric.config import ARITY_GRID, RNG_ALGORITHM, TOOL_VERSION, ParamsConfig, RunConfig
from qsmetric.constants import EtaCurve, constants, continuity_modulus
from qsmetric.dimension import choose_parameters, content_checks, content_table, lemma_limit_series, make_plan
from qsmetric.errors import ConfigError, DomainError, QsMetricError, ResourceBudgetError
from qsmetric.grid import Stencil
from qsmetric.heatmap import capped_difference, emit_heatmap
from qsmetric.reports import BoundsReport
from qsmetric.stochastic import geometric_mean, hitting_roots, law, lipschitz_check, lln_ladder, walk_analysis
from qsmetric.utils import save_csv, save_json
from qsmetric.verifier import (
    MODES,
    SampleSettings,
    ScatterSettings,
    bounds_report,
    qs_scatter,
    ratio_bound_report,
    zone_counts_report,
)
from qsmetric.weights import Params, zone_by_distance, zone_of_child

STEPS = ("verify", "qs", "dimension", "walk", "heatmap")

ZONE_TABLE_DIMENSIONS = (2, 3)
ZONE_TABLE_ARITIES = tuple(range(8, 21))


def setup_logging(out_dir: Path, level: int = logging.INFO):
    """Configure logging for a run: file in the output directory plus stdout."""
    out_dir.mkdir(parents=True, exist_ok=True)
    log_file = out_dir / "qsmetric.log"

    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[
            logging.FileHandler(log_file, encoding="utf-8"),
            logging.StreamHandler(sys.stdout),
        ],
        force=True,
    )


def params_from_config(block: ParamsConfig) -> Params:
    """Construction parameters from the config block, as a ConfigError on bad values."""
    try:
        if block.beta is not None:
            return Params.from_beta(block.n, block.M, Fraction(str(block.beta)), capped=block.capped)
        return Params(n=block.n, M=block.M, L=Fraction(str(block.L)), capped=block.capped)
    except (DomainError, ValueError, ZeroDivisionError) as e:
        raise ConfigError("invalid construction parameters", [{"field": "params", "message": str(e)}]) from e


@dataclass
class RunReport:
    config: Dict[str, Any]
    checks: List[Dict[str, Any]] = field(default_factory=list)
    tables: Dict[str, Any] = field(default_factory=dict)
    statuses: Dict[str, str] = field(default_factory=dict)
    timing: Dict[str, float] = field(default_factory=dict)
    tool_version: str = TOOL_VERSION

    @property
    def passed(self) -> bool:
        return all(check["pass"] for check in self.checks)

    def to_record(self) -> Dict[str, Any]:
        return {
            "tool_version": self.tool_version,
            "rng": RNG_ALGORITHM,
            "config": self.config,
            "checks": self.checks,
            "tables": self.tables,
            "statuses": self.statuses,
            "pass": self.passed,
            "timing": self.timing,
        }


class ExperimentRunner:
    """Runs the selected experiments and writes report.json, CSV tables and SVGs."""

    def __init__(self, config: RunConfig, params: Optional[Params] = None, workers: int = 0):
        self.config = config
        self.params = params or params_from_config(config.params)
        self.workers = workers
        self.out_dir = Path(config.output.directory)
        self.report = RunReport(config=config.model_dump(mode="json"))
        self.logger = logging.getLogger("qsmetric.runner")

    # ---- helpers ----

    def _settings(self, count: int) -> SampleSettings:
        budgets = self.config.budgets
        sampling = self.config.sampling
        return SampleSettings(
            count=count,
            seed=sampling.seed,
            max_weight_level=budgets.max_weight_level,
            resolution_offset=budgets.resolution_offset,
            node_budget=budgets.max_nodes,
            stencil=Stencil.DIAGONAL,
            targets_per_source=sampling.targets_per_source,
            batch_size=sampling.batch_size,
            workers=self.workers,
        )

    def _add_check(self, name: str, passed: bool, details: Optional[Dict[str, Any]] = None):
        self.report.checks.append({"check": name, "pass": bool(passed), "details": details or {}})
        if not passed:
            self.logger.warning(f"❌ {name} failed")

    def _add_report(self, report: BoundsReport):
        self.report.checks.append(report.to_record())

    def _write_csv(self, name: str, rows: List[Dict[str, Any]], columns: List[str]):
        if self.config.output.csv:
            save_csv(str(self.out_dir / name), rows, columns)
            self.logger.info(f"  ✓ Saved {name}")

    # ---- run ----

    def run(self) -> RunReport:
        """Execute the selected experiments."""
        selected = STEPS if self.config.experiment == "all" else (self.config.experiment,)
        steps: Dict[str, Callable[[], None]] = {
            "verify": self.run_verify,
            "qs": self.run_qs,
            "dimension": self.run_dimension,
            "walk": self.run_walk,
            "heatmap": self.run_heatmap,
        }

        self.logger.info("=" * 70)
        self.logger.info(f"🚀 qsmetric {TOOL_VERSION}: {', '.join(selected)} for {self.params.describe()}")
        self.logger.info("=" * 70)

        for number, name in enumerate(selected, 1):
            self.logger.info(f"\n📦 Step {number}: {name}")
            start = time.perf_counter()
            try:
                steps[name]()
                self.report.statuses.setdefault(name, "completed")
            except ResourceBudgetError as e:
                self.report.statuses[name] = f"inconclusive: {e}"
                self._add_check(f"{name}_budget", False, {"error": str(e)})
            except QsMetricError as e:
                self.logger.error(f"{name} failed: {e}", exc_info=True)
                self.report.statuses[name] = f"error: {e}"
                self._add_check(f"{name}_error", False, {"error": str(e)})
            self.report.timing[name] = round(time.perf_counter() - start, 3)

        save_json(str(self.out_dir / "report.json"), self.report.to_record())

        self.logger.info("\n" + "=" * 70)
        verdict = "✅ All checks passed" if self.report.passed else "❌ Some checks failed"
        self.logger.info(f"{verdict} ({len(self.report.checks)} checks)")
        self.logger.info(f"📁 Results: {self.out_dir}")
        self.logger.info("=" * 70)
        return self.report

    def run_verify(self):
        params = self.params
        sampling = self.config.sampling
        budgets = self.config.budgets

        rows = zone_counts_report(ZONE_TABLE_DIMENSIONS, ZONE_TABLE_ARITIES)
        self.report.tables["zone_counts"] = rows
        self._add_check("zone_counts", all(r["agrees"] for r in rows), {"pairs": len(rows)})
        self._write_csv("zone_counts.csv", rows, ["n", "M", "c1", "c2", "c3", "agrees"])

        mismatches = [
            list(offset)
            for offset in product(range(params.M), repeat=params.n)
            if zone_of_child(params, offset) != zone_by_distance(params, offset)
        ]
        self._add_check("zone_rule_matches_distance", not mismatches, {"mismatches": mismatches[:10]})

        for level in range(1, min(3, budgets.max_weight_level) + 1):
            cubes = params.M ** (params.n * level)
            if cubes > budgets.max_nodes:
                self.logger.warning(f"ratio bound at level {level}: {cubes} cubes exceed the budget {budgets.max_nodes}")
                self._add_check(
                    f"ratio_bound_k{level}",
                    False,
                    {"status": "inconclusive", "cubes": cubes, "budget": budgets.max_nodes},
                )
                break
            self._add_report(ratio_bound_report(params, level, budgets.max_nodes))

        counts = {
            "two_sided": sampling.pairs,
            "diameter": sampling.pairs,
            "metric_monotone": sampling.monotone_pairs,
            "path_monotone": sampling.paths,
        }
        for mode in MODES:
            self._add_report(bounds_report(params, mode, self._settings(counts[mode])))

        c = constants(params)
        self.report.tables["constants"] = c.as_dict()
        moduli = [continuity_modulus(params, k) for k in range(6)]
        self.report.tables["continuity_modulus_log10"] = moduli
        self._add_check("continuity_modulus_decreasing", all(b < a for a, b in zip(moduli, moduli[1:])))

        eta = EtaCurve(params)
        ts = [10.0**-e for e in range(1, 13)]
        values = [eta.log10_eta(t) for t in ts]
        self.report.tables["eta_log10"] = [{"t": t, "log10_eta": v} for t, v in zip(ts, values)]
        self._add_check(
            "eta_decreasing_to_zero",
            all(b < a for a, b in zip(values, values[1:])),
            {"t_star": str(eta.t_star), "log10_prefactor": eta.log10_prefactor},
        )

    def run_qs(self):
        sampling = self.config.sampling
        budgets = self.config.budgets
        settings = ScatterSettings(
            triples=sampling.triples,
            seed=sampling.seed,
            qs_levels=budgets.qs_levels,
            resolution_offset=budgets.resolution_offset,
            node_budget=budgets.max_nodes,
            batch_size=sampling.batch_size,
            workers=self.workers,
        )
        report, frame = qs_scatter(self.params, settings)
        self._add_report(report)
        self._write_csv("qs_scatter.csv", frame[["t", "ratio", "eta_t"]].to_dict("records"), ["t", "ratio", "eta_t"])

    def run_dimension(self):
        params = self.params
        options = self.config.dimension
        sampling = self.config.sampling

        gm = geometric_mean(params)
        self.report.tables["geometric_mean"] = {"mu": str(gm.mu), "log_mu": str(gm.log_mu)}
        ladder = lln_ladder(params, sampling.lln_points, sampling.lln_steps, sampling.seed, self.workers)
        self.report.tables["lln"] = ladder
        self._add_check("lln_within_3se", ladder["pass"], {"se_ratio": ladder["se_ratio"]})

        if options.beta is not None:
            plan_params = Params.from_beta(params.n, params.M, Fraction(str(options.beta)))
            plan = make_plan(plan_params, options.alpha)
        else:
            plan = choose_parameters(params.n, options.alpha)
        if plan is None:
            self.report.statuses["dimension"] = "infeasible: no ladder rung admits alpha"
            self._add_check("dimension_plan_feasible", False)
            return
        self._add_check("dimension_plan_feasible", plan.feasible, plan.checks)
        if not plan.feasible:
            self.report.statuses["dimension"] = plan.status
            self.report.tables["dimension_plan"] = plan.to_record()
            return

        table = content_table(
            plan,
            range(1, options.m_max + 1),
            sampling.km_samples,
            sampling.seed,
            options.m_empirical,
            self.config.budgets.km_max_level,
        )
        for name, ok in content_checks(plan, table).items():
            self._add_check(f"content_{name}", ok)
        first = plan.k_m.get(1)
        self._add_check("k1_fraction_threshold", first is not None and first.found, first.to_record() if first else {})
        self.report.tables["dimension_plan"] = plan.to_record()
        self.report.tables["content_table"] = table.to_dict("records")
        self._write_csv("content_table.csv", table.to_dict("records"), list(table.columns))

        beta = plan.params.beta if plan.params.beta is not None else Fraction(str(mp.nstr(plan.beta, 15)))
        series = lemma_limit_series(plan.params.n, plan.alpha, beta, ARITY_GRID)
        self.report.tables["lemma_limit_series"] = series.to_dict("records")
        self._write_csv("lemma_limit_series.csv", series.to_dict("records"), list(series.columns))

        batch_rows = [{"batch": b, "sum_log": s, "count": c} for b, s, c in ladder["batches"]]
        self._write_csv("lln_batches.csv", batch_rows, ["batch", "sum_log", "count"])

    def run_walk(self):
        params = self.params
        options = self.config.walk
        sampling = self.config.sampling

        multiplier, walk = law(params)
        self.report.tables["law"] = {"multiplier": multiplier.as_dict(), "walk": walk.as_dict()}
        self.report.tables["hitting_roots"] = [str(r) for r in hitting_roots(walk)]

        report = walk_analysis(params, options.walks, options.horizon, sampling.seed, self.workers)
        record = report.to_record()
        self.report.tables["walk"] = record
        self.report.statuses["walk"] = report.status
        self._add_check("walk_hitting_within_3se", report.within_3se, {"status": report.status})
        self._add_check(
            "walk_drift",
            report.drift_ok,
            {"drift": report.drift, "expected": report.expected_drift, "se": report.drift_standard_error},
        )

        if params.capped:
            budgets = self.config.budgets
            self._add_report(
                lipschitz_check(
                    params,
                    self._settings(sampling.lipschitz_pairs),
                    budgets.lipschitz_level,
                    max(budgets.lipschitz_resolution, budgets.lipschitz_level),
                )
            )
        else:
            self.report.tables["lipschitz"] = "skipped: uncapped construction"

    def run_heatmap(self):
        options = self.config.heatmap
        params = self.params if options.capped is None else self.params.with_capped(options.capped)
        if not self.config.output.svg:
            self.report.statuses["heatmap"] = "skipped: svg output disabled"
            return
        path = self.out_dir / f"heatmap_k{options.level}.svg"
        summary = emit_heatmap(params, options.level, str(path), options.slice, self.config.budgets.heatmap_cells)
        record = summary.to_record()
        record["path"] = path.name
        record["capped_difference"] = capped_difference(params, options.level, options.slice)
        self.report.tables["heatmap"] = record
        self._add_check("heatmap_cells", sum(summary.counts.values()) == summary.cells, {"cells": summary.cells})

