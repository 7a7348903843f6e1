"""Write scenario summaries as CSV (fixed headers) plus a JSON with every aggregate."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path

from .simulate import ScenarioSummary

BALANCE_HEADER = [
    "scenario_id",
    "caliper_multiplier",
    "mean_pairs",
    "mean_smd_x3",
    "prop_abs_smd_x3_gt_0.1",
    "mahalanobis_means",
    "pairwise_ix",
    "c_stat",
    "mc_se_smd_x3",
]
ESTIMATES_HEADER = [
    "scenario_id",
    "caliper_multiplier",
    "model_spec",
    "mean_estimate",
    "bias",
    "empirical_se",
    "mean_se_model",
    "mean_se_sandwich",
    "n_replicates_used",
]
UNMATCHED = "unmatched"


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)  # shortest round-trip form; "nan" for missing
    return str(value)


def _attr(name: str) -> str:
    return name.replace("0.1", "0_1")


def json_safe(obj):
    if isinstance(obj, float):
        return None if math.isnan(obj) or math.isinf(obj) else obj
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    return obj


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(getattr(row, _attr(col))) for col in header])


def export_results(summary: ScenarioSummary, path) -> dict[str, Path]:
    """Write ``balance.csv``, ``estimates.csv`` and ``summary.json`` into directory ``path``.

    Unmatched-arm estimates are appended to ``estimates.csv`` with
    ``caliper_multiplier`` set to ``unmatched``.
    """
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "balance": out / "balance.csv",
            "estimates": out / "estimates.csv",
            "summary": out / "summary.json",
        }
        _write_csv(files["balance"], BALANCE_HEADER, summary.balance_rows)
        _write_csv(
            files["estimates"],
            ESTIMATES_HEADER,
            list(summary.estimate_rows) + list(summary.unmatched_rows),
        )
        with open(files["summary"], "w") as fh:
            json.dump(json_safe(summary_dict(summary)), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write results to {out}: {exc.strerror or exc}") from None
    return files


def summary_dict(summary: ScenarioSummary) -> dict:
    cfg = summary.config
    return {
        "scenario_id": summary.scenario_id,
        "beta1": summary.beta1,
        "caliper_multipliers": list(summary.caliper_multipliers),
        "model_specs": list(summary.model_specs),
        "coefficients": summary.coefficients,
        "n_replicates": summary.n_replicates,
        "n_failed_replicates": summary.n_failed_replicates,
        "mean_treated_fraction": summary.mean_treated_fraction,
        "balance": [dataclasses.asdict(r) for r in summary.balance_rows],
        "estimates": [dataclasses.asdict(r) for r in summary.estimate_rows],
        "unmatched": [dataclasses.asdict(r) for r in summary.unmatched_rows],
        "cherry_pick": [dataclasses.asdict(r) for r in summary.cherry_rows],
        "replicate_failures": summary.replicate_failures,
        "config": _config_dict(cfg),
    }


def _config_dict(cfg):
    if cfg is None:
        return None
    out = dataclasses.asdict(cfg)
    out.pop("workers")  # scheduling only; results do not depend on it
    return out
