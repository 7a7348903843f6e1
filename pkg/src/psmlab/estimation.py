"""Post-matching effect estimation by OLS with model-based and sandwich variances."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InsufficientRows, RankDeficient, SingularMatrix, TooFewPairs
from .matching import MatchedSample
from .numerics import spd_inverse

NAMED_SPECS = {
    "MA": (),
    "MAX45": (4, 5),
    "MFull": (1, 2, 3, 4, 5),
}


@dataclass(frozen=True)
class ModelSpec:
    """Outcome regression ``Y ~ 1 + A + X_j`` for the listed covariate numbers (1-based)."""

    label: str
    covariates: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(int(j) for j in self.covariates))
        if self.label in NAMED_SPECS:
            if self.covariates != NAMED_SPECS[self.label]:
                raise ValueError(
                    f"{self.label} must adjust for {NAMED_SPECS[self.label]}, got {self.covariates}"
                )
        elif not self.label:
            raise ValueError("model spec needs a label")
        if any(j < 1 for j in self.covariates) or len(set(self.covariates)) != len(self.covariates):
            raise ValueError(f"invalid covariate list {self.covariates}")

    @classmethod
    def named(cls, label: str) -> "ModelSpec":
        try:
            return cls(label, NAMED_SPECS[label])
        except KeyError:
            raise ValueError(f"unknown model spec {label!r}; expected one of {sorted(NAMED_SPECS)}") from None

    @property
    def columns(self) -> list[int]:
        return [j - 1 for j in self.covariates]

    @property
    def n_params(self) -> int:
        return 2 + len(self.covariates)

    def __str__(self):
        return self.label


MA = ModelSpec.named("MA")
MAX45 = ModelSpec.named("MAX45")
MFULL = ModelSpec.named("MFull")


class OLSFit(NamedTuple):
    coefs: np.ndarray
    model_cov: np.ndarray
    residuals: np.ndarray


def _gram_inverse(design) -> np.ndarray:
    try:
        return spd_inverse(design.T @ design)
    except SingularMatrix as exc:
        raise RankDeficient(f"design matrix is rank deficient: {exc}") from None


def ols_fit(design, y) -> OLSFit:
    """Least squares with ``model_cov = s^2 (D'D)^-1``, ``s^2 = RSS / (n - q)``."""
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, q = design.shape
    if y.shape != (n,):
        raise ValueError(f"y has shape {y.shape}, expected ({n},)")
    if n <= q:
        raise InsufficientRows(f"OLS needs more rows than columns, got n={n}, q={q}")
    bread = _gram_inverse(design)
    coefs = bread @ (design.T @ y)
    resid = y - design @ coefs
    s2 = float(resid @ resid) / (n - q)
    return OLSFit(coefs, s2 * bread, resid)


def sandwich_cov(design, residuals, kind: str = "HC1") -> np.ndarray:
    """Heteroskedasticity-robust covariance ``(D'D)^-1 D' diag(e^2) D (D'D)^-1``.

    ``kind="HC1"`` scales by ``n / (n - q)``; ``"HC0"`` does not.
    """
    design = np.asarray(design, dtype=float)
    e = np.asarray(residuals, dtype=float)
    n, q = design.shape
    if n <= q:
        raise InsufficientRows(f"sandwich needs more rows than columns, got n={n}, q={q}")
    bread = _gram_inverse(design)
    de = design * e[:, None]
    cov = bread @ (de.T @ de) @ bread
    if kind == "HC1":
        cov = cov * (n / (n - q))
    elif kind != "HC0":
        raise ValueError(f"unsupported sandwich kind {kind!r}")
    return (cov + cov.T) / 2.0


@dataclass(frozen=True)
class EffectEstimate:
    beta1_hat: float
    se_model: float
    se_sandwich: float
    n_used: int
    spec: ModelSpec


def estimate_from_arrays(x, a, y, spec: ModelSpec, sandwich: str = "HC1") -> EffectEstimate:
    """Regress ``y`` on ``[1, a, x[:, spec.columns]]`` and report A's coefficient."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    design = np.column_stack([np.ones(a.size), a, x[:, spec.columns]])
    fit = ols_fit(design, y)
    robust = sandwich_cov(design, fit.residuals, sandwich)
    return EffectEstimate(
        beta1_hat=float(fit.coefs[1]),
        se_model=math.sqrt(fit.model_cov[1, 1]),
        se_sandwich=math.sqrt(robust[1, 1]),
        n_used=int(a.size),
        spec=spec,
    )


def estimate_effect(matched: MatchedSample, spec: ModelSpec, sandwich: str = "HC1") -> EffectEstimate:
    """Treatment coefficient from pooled OLS over the matched units."""
    if matched.n_pairs == 0:
        raise TooFewPairs("no matched pairs")
    if 2 * matched.n_pairs <= spec.n_params:
        raise TooFewPairs(
            f"{matched.n_pairs} pairs cannot support {spec.n_params} parameters for {spec.label}"
        )
    if spec.covariates and max(spec.covariates) > matched.source.p:
        raise ValueError(f"{spec.label} refers to covariates beyond p={matched.source.p}")
    return estimate_from_arrays(matched.x(), matched.a(), matched.y(), spec, sandwich)


class CherryPick(NamedTuple):
    max_estimate: float
    variance: float
    variance_defined: bool


def cherry_pick_max(estimates: Sequence[EffectEstimate | float]) -> CherryPick:
    """Largest estimate across models and the across-model sample variance.

    A single estimate has no defined variance; 0 is reported with
    ``variance_defined=False``.
    """
    values = np.array([getattr(e, "beta1_hat", e) for e in estimates], dtype=float)
    if values.size == 0:
        raise ValueError("cherry_pick_max needs at least one estimate")
    if values.size == 1:
        return CherryPick(float(values[0]), 0.0, False)
    if np.all(values == values[0]):
        # the mean of identical floats can round away from them
        return CherryPick(float(values[0]), 0.0, True)
    return CherryPick(float(values.max()), float(values.var(ddof=1)), True)
