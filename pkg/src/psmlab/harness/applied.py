"""Match a user-supplied CSV: propensity fit, caliper matching and balance report."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from ..balance import BalanceReport, balance_report
from ..datagen import Dataset
from ..errors import OneClassOnly, ParseError
from ..matching import Caliper, nearest_neighbor_match
from ..numerics import covariance_matrix
from ..propensity import PropensityFit, fit_logistic
from .export import json_safe


@dataclass(eq=False)
class AppliedResult:
    matched: pd.DataFrame
    report: BalanceReport
    fit: PropensityFit
    caliper: Caliper


def _parse_treatment(series: pd.Series, column: str) -> np.ndarray:
    out = np.empty(len(series), dtype=np.int8)
    for i, value in enumerate(series.tolist()):
        if isinstance(value, str):
            text = value.strip()
            num = {"0": 0, "1": 1}.get(text)
        elif isinstance(value, (bool, np.bool_)):
            num = int(value)
        else:
            num = value if value in (0, 1) else None
        if num is None:
            raise ParseError(
                f"treatment column {column!r} must be binary 0/1; row {i + 1} has {value!r}"
            )
        out[i] = num
    return out


def _read_inputs(csv_path, treatment_column, covariate_columns):
    try:
        df = pd.read_csv(csv_path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot parse {csv_path}: {exc}") from None
    missing = [c for c in [treatment_column, *covariate_columns] if c not in df.columns]
    if missing:
        raise ParseError(f"{csv_path}: missing column(s) {', '.join(missing)}")
    if not covariate_columns:
        raise ParseError("at least one covariate column is required")
    a = _parse_treatment(df[treatment_column], treatment_column)
    try:
        x = df[list(covariate_columns)].apply(pd.to_numeric, errors="raise").to_numpy(dtype=float)
    except (ValueError, TypeError) as exc:
        raise ParseError(f"{csv_path}: covariates must be numeric ({exc})") from None
    if not np.all(np.isfinite(x)):
        raise ParseError(f"{csv_path}: covariates contain missing or non-finite values")
    return df, a, x


def applied_match(csv_path, treatment_column: str, covariate_columns, caliper_multiplier: float, out_dir=None) -> AppliedResult:
    """Fit the propensity model on the file's covariates and match 1:1.

    When ``out_dir`` is given, writes ``matched.csv`` (matched rows with
    ``pair_id``, ``propensity_score`` and ``logit_ps`` columns) and
    ``balance.json``.

    Raises
    ------
    ParseError
        Unreadable file, missing columns, non-numeric covariates, or a
        non-binary treatment value.
    OneClassOnly
        All rows in one treatment arm.
    NoPairsFormed
        No treated row has a control within the caliper.
    """
    covariate_columns = list(covariate_columns)
    df, a, x = _read_inputs(csv_path, treatment_column, covariate_columns)
    if a.min() == a.max():
        raise OneClassOnly(f"every row of {csv_path} has {treatment_column}={int(a[0])}")
    ds = Dataset(x, a, np.zeros(len(a)))
    fit = fit_logistic(x, a)
    caliper = Caliper.from_logit_ps(caliper_multiplier, fit.logit_ps)
    matched = nearest_neighbor_match(ds, fit, caliper)
    report = balance_report(matched, covariance_matrix(x))

    order = matched.pairs.ravel()
    out = df.iloc[order].copy()
    out.insert(0, "pair_id", np.repeat(np.arange(1, matched.n_pairs + 1), 2))
    out.insert(1, "row", order)
    out["propensity_score"] = fit.ps[order]
    out["logit_ps"] = fit.logit_ps[order]
    out = out.reset_index(drop=True)

    if out_dir is not None:
        dest = Path(out_dir)
        dest.mkdir(parents=True, exist_ok=True)
        out.to_csv(dest / "matched.csv", index=False)
        payload = report.as_dict()
        payload.update(
            covariates=covariate_columns,
            caliper_multiplier=caliper.multiplier,
            caliper_width=caliper.width,
        )
        with open(dest / "balance.json", "w") as fh:
            json.dump(json_safe(payload), fh, indent=2)
            fh.write("\n")
    return AppliedResult(out, report, fit, caliper)

