"""SVG line charts of a results directory, one file per panel.

Panels per scenario, with the caliper schedule on the x axis (widest first):

A  between-means Mahalanobis distance
B  proportion of |SMD(X3)| > 0.1
C  mean SMD(X3)
D  mean treatment-effect estimate per model, with the true effect
E  empirical vs model-based vs sandwich SE for the non-full models
F  empirical vs model-based SE for the full model
"""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from ..errors import ParseError  # noqa: E402
from .export import BALANCE_HEADER, ESTIMATES_HEADER, UNMATCHED  # noqa: E402

FULL_SPEC = "MFull"

plt.rcParams["svg.hashsalt"] = "psmlab"


def _read(results: Path, name: str, header) -> pd.DataFrame:
    path = results / name
    try:
        df = pd.read_csv(path, dtype={"caliper_multiplier": str, "scenario_id": str})
    except FileNotFoundError:
        raise OSError(f"missing {path}") from None
    if list(df.columns) != header:
        raise ParseError(f"{path} does not have the expected header")
    return df


def _axis(ax, labels, title, ylabel):
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_xlabel("caliper multiplier (x SD of logit PS)")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(alpha=0.3)


def _save(fig, path: Path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_figures(results, out) -> list[Path]:
    """Render panels A-F for every scenario found in ``results``."""
    results, out = Path(results), Path(out)
    balance = _read(results, "balance.csv", BALANCE_HEADER)
    estimates = _read(results, "estimates.csv", ESTIMATES_HEADER)
    beta1 = {}
    summary = results / "summary.json"
    if summary.exists():
        with open(summary) as fh:
            meta = json.load(fh)
        beta1[meta["scenario_id"]] = meta.get("beta1")
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for sid, bal in balance.groupby("scenario_id", sort=True):
        labels = list(bal["caliper_multiplier"])
        x = range(len(labels))

        panels = [
            ("A_mahalanobis", "mahalanobis_means", "Between-means Mahalanobis distance", "distance"),
            ("B_prop_smd_gt_0.1", "prop_abs_smd_x3_gt_0.1", "Proportion |SMD(X3)| > 0.1", "proportion"),
            ("C_smd_x3", "mean_smd_x3", "Mean SMD of X3", "SMD"),
        ]
        for tag, col, title, ylabel in panels:
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.plot(x, bal[col].astype(float), marker="o")
            if tag.startswith("C"):
                ax.axhline(0.0, color="grey", lw=0.8)
            _axis(ax, labels, f"{sid}: {title}", ylabel)
            path = out / f"{sid}_{tag}.svg"
            _save(fig, path)
            written.append(path)

        est = estimates[
            (estimates["scenario_id"] == sid) & (estimates["caliper_multiplier"] != UNMATCHED)
        ]
        specs = list(dict.fromkeys(est["model_spec"]))

        fig, ax = plt.subplots(figsize=(6, 4))
        for spec in specs:
            rows = est[est["model_spec"] == spec].set_index("caliper_multiplier").loc[labels]
            ax.plot(x, rows["mean_estimate"].astype(float), marker="o", label=spec)
        if beta1.get(sid) is not None:
            ax.axhline(beta1[sid], color="black", ls="--", lw=0.8, label="true effect")
        ax.legend()
        _axis(ax, labels, f"{sid}: Mean effect estimate", "estimate")
        path = out / f"{sid}_D_estimates.svg"
        _save(fig, path)
        written.append(path)

        for tag, chosen, with_sandwich in (
            ("E_se_misspecified", [s for s in specs if s != FULL_SPEC], True),
            ("F_se_full", [s for s in specs if s == FULL_SPEC], False),
        ):
            fig, ax = plt.subplots(figsize=(6, 4))
            for spec in chosen:
                rows = est[est["model_spec"] == spec].set_index("caliper_multiplier").loc[labels]
                ax.plot(x, rows["empirical_se"].astype(float), marker="o", label=f"{spec} empirical")
                ax.plot(x, rows["mean_se_model"].astype(float), marker="s", ls="--", label=f"{spec} model")
                if with_sandwich:
                    ax.plot(x, rows["mean_se_sandwich"].astype(float), marker="^", ls=":", label=f"{spec} sandwich")
            if chosen:
                ax.legend()
            _axis(ax, labels, f"{sid}: Standard error concordance", "standard error")
            path = out / f"{sid}_{tag}.svg"
            _save(fig, path)
            written.append(path)
    return written
