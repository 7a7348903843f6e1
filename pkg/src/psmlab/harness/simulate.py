"""Replicated caliper-sweep simulation.

Every replicate owns the random substream ``(seed, replicate_index, attempt)``
and is computed independently; records are merged in replicate order, so a
scenario gives bit-identical output for any worker count.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ..balance import (
    mahalanobis_means,
    matched_c_statistic,
    pairwise_imbalance,
    smd,
)
from ..datagen import (
    CoefVector,
    OutcomeKind,
    OutcomeModelSpec,
    generate_dataset,
    select_coefficient_pair,
    sine_distance,
)
from ..errors import (
    DegenerateTreatment,
    InsufficientRows,
    PSMLabError,
    RankDeficient,
    SeparationDetected,
    SingularMatrix,
    TooFewPairs,
    ZeroVector,
)
from ..estimation import cherry_pick_max, estimate_effect, estimate_from_arrays
from ..matching import Caliper, MatchedSample, greedy_match
from ..numerics import RandomStream, covariance_matrix, sample_sd
from ..propensity import fit_logistic
from .config import ScenarioConfig

log = logging.getLogger(__name__)

SMD_COVARIATE = 2  # X3


@dataclass(frozen=True, eq=False)
class Coefficients:
    alpha1: CoefVector
    beta2: CoefVector

    @property
    def sine(self) -> float:
        """Sine distance of the pair; NaN when either vector is zero."""
        try:
            return sine_distance(self.beta2.values, self.alpha1.values)
        except ZeroVector:
            return math.nan

    def as_dict(self) -> dict:
        return {
            "alpha1": [float(v) for v in self.alpha1.values],
            "beta2": [float(v) for v in self.beta2.values],
            "sine_distance": self.sine,
        }


def resolve_coefficients(cfg: ScenarioConfig) -> Coefficients:
    """Fixed coefficients from the config, or a pair selected from ``coef_seed``."""
    if cfg.fixed_coefs is not None:
        alpha1 = np.asarray(cfg.fixed_coefs["alpha1"], dtype=float)
        beta2 = np.asarray(cfg.fixed_coefs["beta2"], dtype=float)
        return Coefficients(
            CoefVector(alpha1, float(np.linalg.norm(alpha1))),
            CoefVector(beta2, float(np.linalg.norm(beta2))),
        )
    rng = RandomStream(cfg.effective_coef_seed)
    beta2, alpha1 = select_coefficient_pair(rng, cfg.p, cfg.k_beta, cfg.k_alpha, cfg.sine_interval)
    return Coefficients(alpha1, beta2)


def build_outcome(cfg: ScenarioConfig, coefs: Coefficients) -> OutcomeModelSpec:
    return OutcomeModelSpec(
        kind=OutcomeKind(cfg.outcome_kind),
        beta0=cfg.beta0,
        beta1=cfg.beta1,
        beta2=coefs.beta2.values,
        quad_coefs=cfg.quad_coefs,
        interaction_coefs=cfg.interaction_coefs,
        noise_sd=cfg.noise_sd,
    )


@dataclass(eq=False)
class ReplicateRecord:
    """Raw per-replicate numbers. Undefined metrics are NaN."""

    index: int
    n_calipers: int
    n_specs: int
    p: int
    ok: bool = True
    retries: int = 0
    treated_fraction: float = math.nan
    ps_converged: bool = False
    pairs: np.ndarray = None
    smd: np.ndarray = None
    mahalanobis_means: np.ndarray = None
    pairwise_ix: np.ndarray = None
    c_stat: np.ndarray = None
    estimate: np.ndarray = None
    se_model: np.ndarray = None
    se_sandwich: np.ndarray = None
    unmatched_estimate: np.ndarray = None
    unmatched_se_model: np.ndarray = None
    unmatched_se_sandwich: np.ndarray = None
    failures: dict = field(default_factory=dict)

    def __post_init__(self):
        c, s, p = self.n_calipers, self.n_specs, self.p
        if self.pairs is None:
            self.pairs = np.zeros(c, dtype=np.int64)
        for name, shape in (
            ("smd", (c, p)),
            ("mahalanobis_means", (c,)),
            ("pairwise_ix", (c,)),
            ("c_stat", (c,)),
            ("estimate", (c, s)),
            ("se_model", (c, s)),
            ("se_sandwich", (c, s)),
            ("unmatched_estimate", (s,)),
            ("unmatched_se_model", (s,)),
            ("unmatched_se_sandwich", (s,)),
        ):
            if getattr(self, name) is None:
                setattr(self, name, np.full(shape, np.nan))

    def same_as(self, other: "ReplicateRecord") -> bool:
        """Bit-level equality of every recorded number."""
        for name in (
            "pairs", "smd", "mahalanobis_means", "pairwise_ix", "c_stat", "estimate",
            "se_model", "se_sandwich", "unmatched_estimate", "unmatched_se_model",
            "unmatched_se_sandwich",
        ):
            a, b = getattr(self, name), getattr(other, name)
            if a.tobytes() != b.tobytes():
                return False
        return (
            self.index == other.index
            and self.ok == other.ok
            and self.retries == other.retries
            and self.failures == other.failures
            and np.float64(self.treated_fraction).tobytes() == np.float64(other.treated_fraction).tobytes()
        )


def run_replicate(cfg: ScenarioConfig, replicate_index: int, coefs: Coefficients | None = None) -> ReplicateRecord:
    """Generate, fit, match at every caliper, and estimate, for one replicate."""
    if coefs is None:
        coefs = resolve_coefficients(cfg)
    outcome = build_outcome(cfg, coefs)
    specs = cfg.specs
    multipliers = cfg.caliper_multipliers
    rec = ReplicateRecord(replicate_index, len(multipliers), len(specs), cfg.p)
    failures = Counter()

    ds = None
    for attempt in range(cfg.max_treatment_retries + 1):
        rng = RandomStream.substream(cfg.seed, replicate_index, attempt)
        try:
            ds = generate_dataset(rng, cfg.n, cfg.alpha0, coefs.alpha1.values, outcome)
            break
        except DegenerateTreatment:
            failures["DegenerateTreatment"] += 1
    rec.retries = failures["DegenerateTreatment"]
    if ds is None:
        rec.ok = False
        rec.failures = dict(sorted(failures.items()))
        return rec
    rec.treated_fraction = ds.treated_fraction

    try:
        fit = fit_logistic(ds.x, ds.a)
    except (SeparationDetected, SingularMatrix) as exc:
        failures[type(exc).__name__] += 1
        rec.ok = False
        rec.failures = dict(sorted(failures.items()))
        return rec
    rec.ps_converged = fit.converged
    if not fit.converged:
        failures["NotConverged"] += 1

    sigma = covariance_matrix(ds.x)
    sd = sample_sd(fit.logit_ps)
    for ci, mult in enumerate(multipliers):
        caliper = Caliper(mult, mult * sd)
        pairs = greedy_match(fit.logit_ps, ds.a, caliper.width)
        k = pairs.shape[0]
        rec.pairs[ci] = k
        if k == 0:
            failures[f"NoPairsFormed[c={mult!r}]"] += 1
            continue
        matched = MatchedSample(pairs, caliper, ds)
        rec.mahalanobis_means[ci] = mahalanobis_means(matched, sigma)
        rec.pairwise_ix[ci] = pairwise_imbalance(matched, sigma)
        if k >= 2:
            rec.smd[ci] = [smd(matched, j) for j in range(cfg.p)]
        try:
            rec.c_stat[ci] = matched_c_statistic(matched)
        except PSMLabError as exc:
            failures[f"{type(exc).__name__}[c_stat,c={mult!r}]"] += 1
        for si, spec in enumerate(specs):
            try:
                est = estimate_effect(matched, spec, cfg.sandwich)
            except (TooFewPairs, RankDeficient, InsufficientRows) as exc:
                failures[f"{type(exc).__name__}[{spec.label},c={mult!r}]"] += 1
                continue
            rec.estimate[ci, si] = est.beta1_hat
            rec.se_model[ci, si] = est.se_model
            rec.se_sandwich[ci, si] = est.se_sandwich

    if cfg.include_unmatched_arm:
        for si, spec in enumerate(specs):
            est = estimate_from_arrays(ds.x, ds.a, ds.y, spec, cfg.sandwich)
            rec.unmatched_estimate[si] = est.beta1_hat
            rec.unmatched_se_model[si] = est.se_model
            rec.unmatched_se_sandwich[si] = est.se_sandwich

    rec.failures = dict(sorted(failures.items()))
    return rec


# --- aggregation -----------------------------------------------------------


def _mean_se(values) -> tuple[float, float, float, int]:
    """Mean, SD (ddof=1), Monte Carlo SE of the mean, and count of non-NaN values."""
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    n = v.size
    if n == 0:
        return math.nan, math.nan, math.nan, 0
    mean = float(np.mean(v))
    if n == 1:
        return mean, math.nan, math.nan, 1
    sd = float(np.std(v, ddof=1))
    return mean, sd, sd / math.sqrt(n), n


@dataclass(frozen=True)
class BalanceRow:
    scenario_id: str
    caliper_multiplier: float
    mean_pairs: float
    mean_smd_x3: float
    prop_abs_smd_x3_gt_0_1: float
    mahalanobis_means: float
    pairwise_ix: float
    c_stat: float
    mc_se_smd_x3: float
    sd_smd_x3: float = math.nan
    mc_se_pairs: float = math.nan
    mc_se_mahalanobis_means: float = math.nan
    mc_se_pairwise_ix: float = math.nan
    mc_se_c_stat: float = math.nan
    mc_se_prop_abs_smd_x3_gt_0_1: float = math.nan
    n_replicates_used: int = 0
    n_zero_pair: int = 0


@dataclass(frozen=True)
class EstimateRow:
    scenario_id: str
    caliper_multiplier: float | str
    model_spec: str
    mean_estimate: float
    bias: float
    empirical_se: float
    mean_se_model: float
    mean_se_sandwich: float
    n_replicates_used: int
    mc_se_estimate: float = math.nan


@dataclass(frozen=True)
class CherryPickRow:
    scenario_id: str
    caliper_multiplier: float
    mean_max_estimate: float
    bias_max_estimate: float
    mc_se_max_estimate: float
    mean_model_variance: float
    n_replicates_used: int


@dataclass(eq=False)
class ScenarioSummary:
    scenario_id: str
    beta1: float = math.nan
    caliper_multipliers: tuple = ()
    model_specs: tuple = ()
    coefficients: dict = field(default_factory=dict)
    n_replicates: int = 0
    n_failed_replicates: int = 0
    mean_treated_fraction: float = math.nan
    balance_rows: list = field(default_factory=list)
    estimate_rows: list = field(default_factory=list)
    unmatched_rows: list = field(default_factory=list)
    cherry_rows: list = field(default_factory=list)
    replicate_failures: dict = field(default_factory=dict)
    config: ScenarioConfig | None = None
    raw: dict = field(default_factory=dict, repr=False)

    def balance(self, multiplier: float) -> BalanceRow:
        for row in self.balance_rows:
            if row.caliper_multiplier == multiplier:
                return row
        raise KeyError(multiplier)

    def estimate(self, multiplier, spec: str) -> EstimateRow:
        rows = self.unmatched_rows if multiplier == "unmatched" else self.estimate_rows
        for row in rows:
            if row.model_spec == spec and (multiplier == "unmatched" or row.caliper_multiplier == multiplier):
                return row
        raise KeyError((multiplier, spec))

    def cherry(self, multiplier: float) -> CherryPickRow:
        for row in self.cherry_rows:
            if row.caliper_multiplier == multiplier:
                return row
        raise KeyError(multiplier)


def _estimate_row(sid, mult, label, beta1, est, se_m, se_s) -> EstimateRow:
    valid = np.isfinite(est)
    mean, sd, mc, n = _mean_se(est[valid])
    return EstimateRow(
        scenario_id=sid,
        caliper_multiplier=mult,
        model_spec=label,
        mean_estimate=mean,
        bias=mean - beta1,
        empirical_se=sd,
        mean_se_model=_mean_se(se_m[valid])[0],
        mean_se_sandwich=_mean_se(se_s[valid])[0],
        n_replicates_used=n,
        mc_se_estimate=mc,
    )


def summarize(cfg: ScenarioConfig, coefs: Coefficients, records: list[ReplicateRecord]) -> ScenarioSummary:
    """Merge replicate records (in replicate order) into per-caliper aggregates."""
    records = sorted(records, key=lambda r: r.index)
    ok = [r for r in records if r.ok]
    sid = cfg.scenario_id
    multipliers = tuple(cfg.caliper_multipliers)
    labels = tuple(s.label for s in cfg.specs)
    n_cal, n_spec = len(multipliers), len(labels)

    def stack(name, shape):
        if not ok:
            return np.full((0,) + shape, np.nan)
        return np.stack([getattr(r, name) for r in ok])

    raw = {
        "pairs": stack("pairs", (n_cal,)).astype(float),
        "smd": stack("smd", (n_cal, cfg.p)),
        "mahalanobis_means": stack("mahalanobis_means", (n_cal,)),
        "pairwise_ix": stack("pairwise_ix", (n_cal,)),
        "c_stat": stack("c_stat", (n_cal,)),
        "estimate": stack("estimate", (n_cal, n_spec)),
        "se_model": stack("se_model", (n_cal, n_spec)),
        "se_sandwich": stack("se_sandwich", (n_cal, n_spec)),
        "unmatched_estimate": stack("unmatched_estimate", (n_spec,)),
        "unmatched_se_model": stack("unmatched_se_model", (n_spec,)),
        "unmatched_se_sandwich": stack("unmatched_se_sandwich", (n_spec,)),
        "treated_fraction": np.array([r.treated_fraction for r in ok]),
    }

    balance_rows, estimate_rows, cherry_rows = [], [], []
    for ci, mult in enumerate(multipliers):
        pairs = raw["pairs"][:, ci]
        mean_pairs, _, mc_pairs, _ = _mean_se(pairs)
        smd3 = raw["smd"][:, ci, SMD_COVARIATE]
        m_smd, sd_smd, mc_smd, n_smd = _mean_se(smd3)
        defined = smd3[~np.isnan(smd3)]
        big = (np.abs(defined) > 0.1).astype(float)
        prop, _, mc_prop, _ = _mean_se(big)
        m_mah, _, mc_mah, _ = _mean_se(raw["mahalanobis_means"][:, ci])
        m_pix, _, mc_pix, _ = _mean_se(raw["pairwise_ix"][:, ci])
        m_c, _, mc_c, _ = _mean_se(raw["c_stat"][:, ci])
        balance_rows.append(
            BalanceRow(
                scenario_id=sid,
                caliper_multiplier=mult,
                mean_pairs=mean_pairs,
                mean_smd_x3=m_smd,
                prop_abs_smd_x3_gt_0_1=prop,
                mahalanobis_means=m_mah,
                pairwise_ix=m_pix,
                c_stat=m_c,
                mc_se_smd_x3=mc_smd,
                sd_smd_x3=sd_smd,
                mc_se_pairs=mc_pairs,
                mc_se_mahalanobis_means=mc_mah,
                mc_se_pairwise_ix=mc_pix,
                mc_se_c_stat=mc_c,
                mc_se_prop_abs_smd_x3_gt_0_1=mc_prop,
                n_replicates_used=n_smd,
                n_zero_pair=int(np.sum(pairs == 0)),
            )
        )
        for si, label in enumerate(labels):
            estimate_rows.append(
                _estimate_row(
                    sid, mult, label, cfg.beta1,
                    raw["estimate"][:, ci, si],
                    raw["se_model"][:, ci, si],
                    raw["se_sandwich"][:, ci, si],
                )
            )
        est = raw["estimate"][:, ci, :]
        complete = est[np.all(np.isfinite(est), axis=1)] if est.size else est
        picks = [cherry_pick_max(row) for row in complete]
        m_max, _, mc_max, n_max = _mean_se([c.max_estimate for c in picks])
        m_var = _mean_se([c.variance for c in picks if c.variance_defined])[0]
        cherry_rows.append(
            CherryPickRow(sid, mult, m_max, m_max - cfg.beta1, mc_max, m_var, n_max)
        )

    unmatched_rows = []
    if cfg.include_unmatched_arm:
        for si, label in enumerate(labels):
            unmatched_rows.append(
                _estimate_row(
                    sid, "unmatched", label, cfg.beta1,
                    raw["unmatched_estimate"][:, si],
                    raw["unmatched_se_model"][:, si],
                    raw["unmatched_se_sandwich"][:, si],
                )
            )

    failures = Counter()
    for r in records:
        failures.update(r.failures)

    return ScenarioSummary(
        scenario_id=sid,
        beta1=cfg.beta1,
        caliper_multipliers=multipliers,
        model_specs=labels,
        coefficients=coefs.as_dict(),
        n_replicates=len(records),
        n_failed_replicates=len(records) - len(ok),
        mean_treated_fraction=_mean_se(raw["treated_fraction"])[0],
        balance_rows=balance_rows,
        estimate_rows=estimate_rows,
        unmatched_rows=unmatched_rows,
        cherry_rows=cherry_rows,
        replicate_failures=dict(sorted(failures.items())),
        config=cfg,
        raw=raw,
    )


def run_scenario(cfg: ScenarioConfig, workers: int | None = None) -> ScenarioSummary:
    """Run ``cfg.replicates`` replicates and aggregate them."""
    workers = cfg.workers if workers is None else workers
    if workers < 1:
        raise ValueError("workers must be >= 1")
    coefs = resolve_coefficients(cfg)
    log.info(
        "scenario %s: %d replicates, sine distance %.4f, %d worker(s)",
        cfg.scenario_id, cfg.replicates, coefs.sine, workers,
    )
    task = partial(run_replicate, cfg, coefs=coefs)
    indices = range(cfg.replicates)
    if workers == 1:
        records = [task(i) for i in indices]
    else:
        chunk = max(1, cfg.replicates // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(task, indices, chunksize=chunk))
    return summarize(cfg, coefs, records)
