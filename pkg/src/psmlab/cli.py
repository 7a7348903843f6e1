"""Command line entry point.

    psmlab simulate --config <path|shipped-name> --out <dir> [--replicates N] [--workers K] [--seed S]
    psmlab match --input data.csv --treatment <col> --covariates <c1,c2,...> --caliper <c> --out <dir>
    psmlab figures --results <dir> --out <dir>

Exit status: 0 on success, 2 on configuration errors, 3 on runtime failures.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigInvalid, PSMLabError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("psmlab")


def _cmd_simulate(args) -> int:
    from .harness.config import SHIPPED, load_config, load_scenario
    from .harness.export import export_results
    from .harness.simulate import run_scenario

    if Path(args.config).exists() or args.config not in SHIPPED:
        cfg = load_config(args.config, seed_override=args.seed)
    else:
        cfg = load_scenario(args.config, seed_override=args.seed)
    if args.replicates is not None:
        cfg = cfg.replace(replicates=args.replicates)
    if args.workers is not None:
        cfg = cfg.replace(workers=args.workers)
    summary = run_scenario(cfg)
    files = export_results(summary, args.out)
    log.info("wrote %s", ", ".join(str(p) for p in files.values()))
    for name, count in summary.replicate_failures.items():
        log.info("replicate failure %s: %d", name, count)
    return EXIT_OK


def _cmd_match(args) -> int:
    from .harness.applied import applied_match

    covariates = [c.strip() for c in args.covariates.split(",") if c.strip()]
    result = applied_match(args.input, args.treatment, covariates, args.caliper, out_dir=args.out)
    rep = result.report
    print(f"pairs: {rep.n_pairs}")
    for name, d in zip(covariates, rep.smd):
        print(f"SMD {name}: {d:+.4f}")
    print(f"Mahalanobis (means): {rep.mahalanobis_means:.4f}")
    print(f"pairwise I(X): {rep.pairwise_ix:.4f}")
    print(f"C-statistic: {rep.c_stat:.4f}")
    return EXIT_OK


def _cmd_figures(args) -> int:
    from .harness.figures import render_figures

    for path in render_figures(args.results, args.out):
        log.info("wrote %s", path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psmlab", description="Propensity score matching laboratory")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo caliper sweep")
    sim.add_argument("--config", required=True, help="TOML scenario file or shipped scenario name")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--replicates", type=int)
    sim.add_argument("--workers", type=int)
    sim.add_argument("--seed", type=int)
    sim.set_defaults(func=_cmd_simulate)

    match = sub.add_parser("match", help="match the rows of a CSV file")
    match.add_argument("--input", required=True)
    match.add_argument("--treatment", required=True)
    match.add_argument("--covariates", required=True, help="comma-separated column names")
    match.add_argument("--caliper", required=True, type=float, help="multiplier of the logit-PS SD")
    match.add_argument("--out", required=True)
    match.set_defaults(func=_cmd_match)

    fig = sub.add_parser("figures", help="render SVG panels from a results directory")
    fig.add_argument("--results", required=True)
    fig.add_argument("--out", required=True)
    fig.set_defaults(func=_cmd_figures)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PSMLabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
