"""Imbalance diagnostics for a matched sample.

Both Mahalanobis metrics use a fixed covariance: the one computed on the full
pre-match sample, so values stay comparable across caliper sizes.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InsufficientRows, SeparationDetected, TooFewPairs
from .matching import MatchedSample
from .numerics import cholesky
from .propensity import PropensityFit, c_statistic, fit_logistic

SMD_THRESHOLD = 0.1


@dataclass(frozen=True, eq=False)
class BalanceReport:
    smd: np.ndarray
    mahalanobis_means: float
    pairwise_ix: float
    c_stat: float
    n_pairs: int

    def as_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "smd": [float(v) for v in self.smd],
            "mahalanobis_means": self.mahalanobis_means,
            "pairwise_ix": self.pairwise_ix,
            "c_stat": self.c_stat,
        }


def standardized_mean_difference(x_treated, x_control) -> float:
    """Signed mean gap over ``sqrt((s1^2 + s0^2) / 2)`` with ``ddof=1`` variances.

    Zero-variance groups give 0 when the means agree and a signed infinity
    (with a ``RuntimeWarning``) when they do not.
    """
    x1 = np.asarray(x_treated, dtype=float)
    x0 = np.asarray(x_control, dtype=float)
    if x1.size < 2 or x0.size < 2:
        raise TooFewPairs("SMD needs at least two units per group")
    gap = x1.mean() - x0.mean()
    pooled = math.sqrt((x1.var(ddof=1) + x0.var(ddof=1)) / 2.0)
    if pooled > 0:
        return float(gap / pooled)
    if gap == 0:
        return 0.0
    warnings.warn("SMD of a covariate with zero variance in both groups", RuntimeWarning)
    return math.copysign(math.inf, gap)


def smd(matched: MatchedSample, covariate: int) -> float:
    """SMD of column ``covariate`` (0-based) over the matched units."""
    if matched.n_pairs < 2:
        raise TooFewPairs(f"SMD needs at least 2 pairs, got {matched.n_pairs}")
    x = matched.source.x[:, covariate]
    return standardized_mean_difference(x[matched.treated], x[matched.control])


def _whiten(gaps, sigma) -> np.ndarray:
    low = cholesky(sigma)
    return scipy.linalg.solve_triangular(low, np.asarray(gaps, dtype=float).T, lower=True)


def mahalanobis_between_means(x_treated, x_control, sigma) -> float:
    gap = np.asarray(x_treated).mean(axis=0) - np.asarray(x_control).mean(axis=0)
    return float(np.linalg.norm(_whiten(gap, sigma)))


def mahalanobis_means(matched: MatchedSample, sigma) -> float:
    """Mahalanobis distance between matched treated and control covariate means."""
    x = matched.source.x
    return mahalanobis_between_means(x[matched.treated], x[matched.control], sigma)


def pairwise_imbalance(matched: MatchedSample, sigma) -> float:
    """Mean within-pair Mahalanobis distance."""
    if matched.n_pairs < 1:
        raise TooFewPairs("pairwise imbalance needs at least one pair")
    x = matched.source.x
    gaps = x[matched.treated] - x[matched.control]
    z = _whiten(gaps, sigma)
    return float(np.mean(np.sqrt(np.sum(z * z, axis=0))))


def refit_on_matched(matched: MatchedSample) -> PropensityFit:
    """Logistic fit of treatment on all covariates within the matched units."""
    return fit_logistic(matched.x(), matched.a())


def matched_c_statistic(matched: MatchedSample) -> float:
    """C-statistic of a logistic model refitted on the matched units.

    Separated samples are scored with the last IRLS iterate; samples too
    small to fit return NaN.
    """
    a = matched.a()
    try:
        fit = refit_on_matched(matched)
    except SeparationDetected as exc:
        fit = exc.fit
    except InsufficientRows:
        return math.nan
    return c_statistic(fit.ps, a)


def balance_report(matched: MatchedSample, sigma, refit: PropensityFit | None = None) -> BalanceReport:
    """All balance diagnostics for ``matched``.

    ``refit`` must be a propensity fit on the matched units in
    :attr:`MatchedSample.units` order; when omitted it is computed here.
    """
    p = matched.source.p
    smds = np.array([smd(matched, j) for j in range(p)])
    if refit is None:
        c = matched_c_statistic(matched)
    else:
        if refit.ps.shape[0] != 2 * matched.n_pairs:
            raise ValueError("refit is not aligned with the matched units")
        c = c_statistic(refit.ps, matched.a())
    return BalanceReport(
        smd=smds,
        mahalanobis_means=mahalanobis_means(matched, sigma),
        pairwise_ix=pairwise_imbalance(matched, sigma),
        c_stat=c,
        n_pairs=matched.n_pairs,
    )
