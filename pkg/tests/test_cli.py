"""
End-to-end runs through the command line entry point
"""

import json

import pytest

from qsmetric.cli import main
from qsmetric.config import parse_run_config
from qsmetric.runner import ExperimentRunner

SMALL_SAMPLING = {
    "pairs": 20,
    "monotone_pairs": 10,
    "paths": 10,
    "triples": 14,
    "lln_points": 4000,
    "lln_steps": 50,
    "km_samples": 500,
    "batch_size": 10,
    "targets_per_source": 5,
}
SMALL_BUDGETS = {"max_nodes": 300_000, "max_weight_level": 2, "resolution_offset": 1}


def write_config(tmp_path, **sections):
    config = {"params": {"n": 2, "M": 8, "L": 8}, "sampling": SMALL_SAMPLING, "budgets": SMALL_BUDGETS}
    config.update(sections)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


def read_report(out):
    return json.loads((out / "report.json").read_text(encoding="utf-8"))


def test_missing_arity_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"params": {"n": 2, "L": 8}}', encoding="utf-8")
    assert main(["verify", "--config", str(path)]) == 2
    assert "params.M" in capsys.readouterr().err


def test_invalid_parameters_exit_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"params": {"n": 2, "M": 4, "L": 8}}', encoding="utf-8")
    assert main(["verify", "--config", str(path)]) == 2


def test_alpha_at_dimension_exits_2(tmp_path, capsys):
    path = write_config(tmp_path, dimension={"alpha": 2.0})
    assert main(["dimension", "--config", str(path)]) == 2
    assert "dimension.alpha" in capsys.readouterr().err


def test_usage_errors_exit_2(tmp_path):
    path = write_config(tmp_path)
    assert main(["sideways", "--config", str(path)]) == 2
    assert main(["verify"]) == 2
    assert main(["verify", "--config", str(path), "--seed", "-1"]) == 2
    assert main(["verify", "--config", str(path), "--seed", str(2**64)]) == 2


def test_verify_run(tmp_path):
    out = tmp_path / "verify"
    assert main(["verify", "--config", str(write_config(tmp_path)), "--out", str(out), "--seed", "1"]) == 0
    report = read_report(out)
    checks = {c["check"] for c in report["checks"]}
    assert {"two_sided", "diameter", "metric_monotone", "path_monotone"} <= checks
    assert {"ratio_bound_k1", "ratio_bound_k2", "zone_counts"} <= checks
    assert report["pass"] is True
    assert report["config"]["sampling"]["seed"] == 1
    assert report["config"]["output"]["directory"] == str(out)
    assert report["tables"]["constants"]["C1"] == "51200/3"
    assert (out / "zone_counts.csv").exists()
    assert (out / "qsmetric.log").exists()


def test_ratio_bound_over_budget_is_reported(tmp_path):
    out = tmp_path / "tight"
    path = write_config(tmp_path, budgets={**SMALL_BUDGETS, "max_nodes": 1000})
    assert main(["verify", "--config", str(path), "--out", str(out)]) == 1
    checks = {c["check"]: c for c in read_report(out)["checks"]}
    assert checks["ratio_bound_k1"]["pass"] is True
    skipped = checks["ratio_bound_k2"]
    assert skipped["pass"] is False
    assert skipped["details"] == {"status": "inconclusive", "cubes": 4096, "budget": 1000}


def test_heatmap_run(tmp_path):
    out = tmp_path / "heatmap"
    path = write_config(tmp_path, heatmap={"level": 1})
    assert main(["heatmap", "--config", str(path), "--out", str(out)]) == 0
    report = read_report(out)
    assert report["tables"]["heatmap"]["counts"] == {"0,0": 28, "1,0": 20, "0,1": 16}
    assert (out / "heatmap_k1.svg").exists()


def test_walk_run(tmp_path):
    out = tmp_path / "walk"
    path = write_config(tmp_path, walk={"walks": 2000, "horizon": 200})
    assert main(["walk", "--config", str(path), "--out", str(out)]) == 0
    report = read_report(out)
    assert report["statuses"]["walk"].startswith("recurrent")
    assert report["tables"]["hitting_roots"] == ["1", "3"]


def test_capped_walk_run(tmp_path):
    out = tmp_path / "capped"
    path = write_config(
        tmp_path,
        params={"n": 2, "M": 16, "L": 16, "capped": True},
        sampling={**SMALL_SAMPLING, "lipschitz_pairs": 40},
        walk={"walks": 20_000, "horizon": 500},
        budgets={"max_nodes": 300_000, "lipschitz_level": 2, "lipschitz_resolution": 3},
    )
    assert main(["walk", "--config", str(path), "--out", str(out)]) == 0
    report = read_report(out)
    assert report["tables"]["walk"]["r"] == "7/9"
    assert report["tables"]["walk"]["F"] == "2/9"
    assert any(c["check"] == "lipschitz" and c["pass"] for c in report["checks"])


def test_dimension_run(tmp_path):
    out = tmp_path / "dimension"
    path = write_config(tmp_path, dimension={"alpha": 1.1, "m_max": 2, "m_empirical": 2})
    assert main(["dimension", "--config", str(path), "--out", str(out)]) == 0
    report = read_report(out)
    assert report["tables"]["dimension_plan"]["status"] == "feasible"
    header = (out / "lln_batches.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "batch,sum_log,count"
    assert (out / "content_table.csv").exists()


def test_qs_scatter_csv(tmp_path):
    out = tmp_path / "qs"
    path = write_config(tmp_path)
    main(["qs", "--config", str(path), "--out", str(out)])
    header = (out / "qs_scatter.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "t,ratio,eta_t"


@pytest.mark.parametrize("experiment", ["verify", "qs", "heatmap"])
def test_report_independent_of_workers(tmp_path, experiment):
    records = []
    for workers in (1, 3):
        out = tmp_path / f"{experiment}_{workers}"
        config = parse_run_config(
            json.dumps(
                {
                    "params": {"n": 2, "M": 8, "L": 8},
                    "experiment": experiment,
                    "sampling": SMALL_SAMPLING,
                    "budgets": SMALL_BUDGETS,
                    "heatmap": {"level": 1},
                    "output": {"directory": str(tmp_path / "shared")},
                }
            )
        )
        record = ExperimentRunner(config, workers=workers).run().to_record()
        record.pop("timing")
        records.append(json.dumps(record, sort_keys=True))
        (tmp_path / "shared" / "report.json").rename(out.with_suffix(".json"))
    assert records[0] == records[1]
