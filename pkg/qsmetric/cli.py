"""
Command Line Interface
qsmetric <verify|qs|dimension|walk|heatmap|all> --config FILE [--out DIR] [--seed U64]

Exit codes: 0 all checks pass, 1 a check failed or was inconclusive,
2 usage or configuration error.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from qsmetric.config import EXPERIMENTS, TOOL_VERSION, RunConfig, load_run_config
from qsmetric.errors import ConfigError
from qsmetric.runner import ExperimentRunner, params_from_config, setup_logging

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsmetric",
        description="Build and verify the singular quasisymmetric metric on the unit cube.",
    )
    parser.add_argument("command", choices=EXPERIMENTS, help="Experiment to run")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="Output directory (overrides output.directory)")
    parser.add_argument("--seed", type=_seed, default=None, help="Root seed (overrides sampling.seed)")
    parser.add_argument("--version", action="version", version=f"qsmetric {TOOL_VERSION}")
    return parser


def apply_overrides(config: RunConfig, command: str, out: Optional[str], seed: Optional[int]) -> RunConfig:
    """Command line values take precedence over the config file."""
    update = {"experiment": command}
    if out is not None:
        update["output"] = config.output.model_copy(update={"directory": out})
    if seed is not None:
        update["sampling"] = config.sampling.model_copy(update={"seed": seed})
    return config.model_copy(update=update)


def report_config_error(error: ConfigError):
    """Human summary on stderr followed by one JSON diagnostic per line."""
    print(f"❌ {error.args[0]}", file=sys.stderr)
    for diagnostic in error.diagnostics:
        print(json.dumps(diagnostic, sort_keys=True), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_PASS

    try:
        config = apply_overrides(load_run_config(args.config), args.command, args.out, args.seed)
        params = params_from_config(config.params)
    except ConfigError as e:
        report_config_error(e)
        return EXIT_USAGE

    setup_logging(Path(config.output.directory))
    report = ExperimentRunner(config, params).run()
    return EXIT_PASS if report.passed else EXIT_FAIL


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
