"""Logistic propensity model fitted by IRLS, and the C-statistic."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .errors import InsufficientRows, NotConverged, OneClassOnly, SeparationDetected
from .numerics import solve_spd

log = logging.getLogger(__name__)

MAX_ITER = 100
SCORE_TOL = 1e-8
SEPARATION_ETA = 30.0


@dataclass(frozen=True, eq=False)
class PropensityFit:
    intercept: float
    coefs: np.ndarray
    ps: np.ndarray
    logit_ps: np.ndarray
    converged: bool
    iterations: int
    gradient_norm: float
    loglik: float

    def linear_predictor(self, x) -> np.ndarray:
        return linear_predictor(x, self.intercept, self.coefs)


def linear_predictor(x, intercept: float, coefs) -> np.ndarray:
    # Column-wise accumulation: covariate-identical rows get bit-identical scores.
    x = np.asarray(x, dtype=float)
    eta = np.full(x.shape[0], float(intercept))
    for j, c in enumerate(np.asarray(coefs, dtype=float)):
        eta += x[:, j] * c
    return eta


def _loglik(eta, a):
    return float(np.sum(a * eta - np.logaddexp(0.0, eta)))


def _check_treatment(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 1:
        raise ValueError("treatment must be a vector")
    if np.any((a != 0) & (a != 1)):
        raise ValueError("treatment must be coded 0/1")
    a = a.astype(float)
    if a.size == 0 or a.min() == a.max():
        raise OneClassOnly("treatment vector contains a single class")
    return a


def fit_logistic(x, a, max_iter: int = MAX_ITER, tol: float = SCORE_TOL, strict: bool = False):
    """Maximum-likelihood logistic regression of ``a`` on ``[1, x]``.

    Newton/IRLS steps are halved while the log-likelihood decreases.
    Convergence means the max-norm of the score ``D'(a - ps)`` is at most
    ``tol``.

    Parameters
    ----------
    x : (n, p) array
    a : (n,) 0/1 array
    strict : bool
        Raise :class:`NotConverged` instead of returning a fit flagged
        ``converged=False``.

    Raises
    ------
    SeparationDetected
        When some linear predictor exceeds 30 in absolute value, or when the
        converged fit classifies every unit correctly (complete separation,
        where no finite MLE exists).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    a = _check_treatment(a)
    n, p = x.shape
    if a.size != n:
        raise ValueError(f"x has {n} rows but a has {a.size} entries")
    if n <= p + 1:
        raise InsufficientRows(f"logistic fit needs n > p + 1, got n={n}, p={p}")

    design = np.column_stack([np.ones(n), x])
    beta = np.zeros(p + 1)
    abar = a.mean()
    beta[0] = np.log(abar / (1.0 - abar))

    def snapshot(beta, eta, gnorm, it, converged):
        return PropensityFit(
            intercept=float(beta[0]),
            coefs=beta[1:].copy(),
            ps=expit(eta),
            logit_ps=eta,
            converged=converged,
            iterations=it,
            gradient_norm=gnorm,
            loglik=_loglik(eta, a),
        )

    eta = linear_predictor(x, beta[0], beta[1:])
    ll = _loglik(eta, a)
    converged = False
    it = 0
    while True:
        mu = expit(eta)
        score = design.T @ (a - mu)
        gnorm = float(np.max(np.abs(score)))
        if np.max(np.abs(eta)) > SEPARATION_ETA:
            raise SeparationDetected(
                f"|linear predictor| exceeded {SEPARATION_ETA:g} after {it} iterations",
                fit=snapshot(beta, eta, gnorm, it, False),
            )
        if gnorm <= tol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        w = mu * (1.0 - mu)
        info = (design * w[:, None]).T @ design
        step = solve_spd(info, score)
        t = 1.0
        while True:
            cand = beta + t * step
            cand_eta = linear_predictor(x, cand[0], cand[1:])
            cand_ll = _loglik(cand_eta, a)
            if cand_ll >= ll - 1e-12 * abs(ll) or t < 2.0**-30:
                break
            t /= 2.0
        beta, eta, ll = cand, cand_eta, cand_ll

    fit = snapshot(beta, eta, gnorm, it, converged)
    if converged and np.all((eta > 0) == (a == 1)) and np.all(eta != 0):
        raise SeparationDetected("fitted model classifies every unit correctly", fit=fit)
    if not converged:
        msg = f"IRLS did not converge in {max_iter} iterations (score max-norm {gnorm:.3e})"
        if strict:
            raise NotConverged(msg, fit=fit)
        log.warning(msg)
    return fit


def c_statistic(scores, a) -> float:
    """Mann-Whitney AUC: ``P(score_treated > score_control) + 0.5 P(tie)``."""
    scores = np.asarray(scores, dtype=float)
    a = _check_treatment(a)
    if scores.shape != a.shape:
        raise ValueError("scores and treatment must have the same length")
    treated = a == 1
    n1 = int(treated.sum())
    n0 = a.size - n1
    ranks = rankdata(scores)
    u = ranks[treated].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))
