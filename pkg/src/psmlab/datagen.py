"""Synthetic confounders, treatment assignment and outcomes.

Covariates are iid standard normal. Treatment follows a logistic model in the
covariates and outcomes are ``beta0 + beta1*A + g(X) + noise``, where ``g`` is
either linear or linear plus quadratic/interaction terms.

Covariate numbers in model specifications are 1-based (``X1`` .. ``Xp``).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DegenerateTreatment, RejectionLimitExceeded, ZeroVector
from .numerics import RandomStream

DEFAULT_MAX_ATTEMPTS = 100_000


@dataclass(frozen=True, eq=False)
class CoefVector:
    """A coefficient vector of Euclidean norm ``scale``."""

    values: np.ndarray
    scale: float

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        norm = float(np.linalg.norm(values))
        if not math.isclose(norm, self.scale, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"coefficient norm {norm!r} does not match scale {self.scale!r}")

    @property
    def dim(self) -> int:
        return self.values.size

    @property
    def unit(self) -> np.ndarray:
        return self.values / self.scale

    def __len__(self):
        return self.dim

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def coef_vector_from_draws(raw, flips, scale: float) -> CoefVector:
    """Normalise integer draws, flip the signs marked in ``flips`` and rescale."""
    raw = np.asarray(raw, dtype=float)
    unit = raw / np.linalg.norm(raw)
    signs = np.where(np.asarray(flips, dtype=bool), -1.0, 1.0)
    values = unit * signs * scale
    # renormalise so the stored norm matches ``scale`` to rounding
    values *= scale / np.linalg.norm(values)
    return CoefVector(values, float(scale))


def generate_coef_vector(rng: RandomStream, dim: int, scale: float) -> CoefVector:
    """Draw integers from 1..9, normalise, flip each sign with probability 0.5, scale."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    raw = rng.integers(1, 9, size=dim)
    flips = rng.bernoulli(0.5, size=dim)
    return coef_vector_from_draws(raw, flips, scale)


def sine_distance(u, v) -> float:
    """Sine of the angle between ``u`` and ``v``, i.e. ``sqrt(1 - cos^2)``.

    Evaluated through the half-angle form ``theta = 2*atan2(|u'-v'|, |u'+v'|)``
    on the unit vectors, which keeps nearly parallel inputs accurate.
    """
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < 1e-12 or nv < 1e-12:
        raise ZeroVector("sine distance is undefined for a zero vector")
    uu, vv = u / nu, v / nv
    theta = 2.0 * math.atan2(np.linalg.norm(uu - vv), np.linalg.norm(uu + vv))
    return min(1.0, abs(math.sin(theta)))


def in_sine_interval(s: float, interval) -> bool:
    """Membership in ``(lo, hi]``; a lower bound of exactly 0 is treated as closed."""
    lo, hi = interval
    return (s > lo or lo == 0) and s <= hi


def select_coefficient_pair(
    rng: RandomStream,
    dim: int,
    k_beta: float,
    k_alpha: float,
    interval,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> tuple[CoefVector, CoefVector]:
    """Rejection-sample ``(beta2, alpha1)`` until their sine distance lies in ``interval``.

    ``beta2`` is drawn before ``alpha1`` on every attempt.
    """
    lo, hi = interval
    if not 0 <= lo < hi <= 1:
        raise ValueError(f"interval must satisfy 0 <= lo < hi <= 1, got {interval}")
    for _ in range(max_attempts):
        beta2 = generate_coef_vector(rng, dim, k_beta)
        alpha1 = generate_coef_vector(rng, dim, k_alpha)
        if in_sine_interval(sine_distance(beta2.values, alpha1.values), interval):
            return beta2, alpha1
    raise RejectionLimitExceeded(
        f"no coefficient pair with sine distance in {interval} after {max_attempts} attempts"
    )


class OutcomeKind(str, enum.Enum):
    LINEAR = "Linear"
    COMPLEX = "Complex"


@dataclass(frozen=True, eq=False)
class OutcomeModelSpec:
    """Outcome model ``beta0 + beta1*A + g(X) + N(0, noise_sd^2)``.

    ``quad_coefs`` holds ``(j, c)`` for a term ``c * Xj**2``;
    ``interaction_coefs`` holds ``((j, k), c)`` for ``c * Xj * Xk``.
    """

    kind: OutcomeKind
    beta0: float
    beta1: float
    beta2: np.ndarray
    quad_coefs: tuple = ()
    interaction_coefs: tuple = ()
    noise_sd: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", OutcomeKind(self.kind))
        beta2 = np.array(self.beta2, dtype=float)
        beta2.setflags(write=False)
        object.__setattr__(self, "beta2", beta2)
        quad = tuple((int(j), float(c)) for j, c in self.quad_coefs)
        inter = tuple(((int(j), int(k)), float(c)) for (j, k), c in self.interaction_coefs)
        object.__setattr__(self, "quad_coefs", quad)
        object.__setattr__(self, "interaction_coefs", inter)
        if self.kind is OutcomeKind.LINEAR and (quad or inter):
            raise ValueError("a Linear outcome model cannot carry quadratic or interaction terms")
        if not self.noise_sd > 0:
            raise ValueError(f"noise_sd must be positive, got {self.noise_sd}")
        p = beta2.size
        for j in [j for j, _ in quad] + [i for pair, _ in inter for i in pair]:
            if not 1 <= j <= p:
                raise ValueError(f"covariate number {j} outside 1..{p}")

    def g(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = x @ self.beta2
        for j, c in self.quad_coefs:
            out = out + c * x[:, j - 1] ** 2
        for (j, k), c in self.interaction_coefs:
            out = out + c * x[:, j - 1] * x[:, k - 1]
        return out

    def mean(self, x, a) -> np.ndarray:
        """Conditional mean ``E[Y | A, X]``."""
        return self.beta0 + self.beta1 * np.asarray(a, dtype=float) + self.g(x)


DEFAULT_QUAD = ((1, 0.5), (2, 0.5))
DEFAULT_INTERACTIONS = (((1, 2), 0.7), ((3, 4), 0.7))


def linear_outcome(beta1: float, beta2, beta0: float = 0.0, noise_sd: float = 1.0):
    return OutcomeModelSpec(OutcomeKind.LINEAR, beta0, beta1, np.asarray(beta2), noise_sd=noise_sd)


def complex_outcome(
    beta1: float,
    beta2,
    beta0: float = 0.0,
    noise_sd: float = 1.0,
    quad_coefs=DEFAULT_QUAD,
    interaction_coefs=DEFAULT_INTERACTIONS,
):
    """Linear terms plus ``0.5 X1^2 + 0.5 X2^2 + 0.7 X1 X2 + 0.7 X3 X4`` by default."""
    return OutcomeModelSpec(
        OutcomeKind.COMPLEX,
        beta0,
        beta1,
        np.asarray(beta2),
        quad_coefs=quad_coefs,
        interaction_coefs=interaction_coefs,
        noise_sd=noise_sd,
    )


@dataclass(frozen=True, eq=False)
class Truth:
    outcome: OutcomeModelSpec
    alpha0: float
    alpha1: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    truth: Truth | None = field(default=None, repr=False)

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        a = np.asarray(self.a)
        if np.any((a != 0) & (a != 1)):
            raise ValueError("treatment must be coded 0/1")
        a = a.astype(np.int8)
        y = np.array(self.y, dtype=float)
        if not (len(a) == len(y) == x.shape[0]):
            raise ValueError(
                f"length mismatch: x has {x.shape[0]} rows, a {len(a)}, y {len(y)}"
            )
        for arr in (x, a, y):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def treated_fraction(self) -> float:
        return float(self.a.mean())


def generate_dataset(
    rng: RandomStream,
    n: int,
    alpha0: float,
    alpha1,
    outcome: OutcomeModelSpec,
) -> Dataset:
    """Draw ``X ~ N(0, I)``, ``A ~ Bernoulli(expit(alpha0 + alpha1'X))`` and ``Y``.

    Raises
    ------
    DegenerateTreatment
        If every unit ends up in the same arm.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    alpha1 = np.asarray(alpha1, dtype=float)
    p = alpha1.size
    if outcome.beta2.size != p:
        raise ValueError(f"beta2 has {outcome.beta2.size} entries, alpha1 has {p}")
    x = rng.standard_normal((n, p))
    a = rng.bernoulli(expit(alpha0 + x @ alpha1))
    eps = rng.standard_normal(n) * outcome.noise_sd
    if a.min() == a.max():
        raise DegenerateTreatment(f"all {n} units were assigned A={int(a[0])}")
    y = outcome.mean(x, a) + eps
    return Dataset(x, a, y, Truth(outcome, float(alpha0), alpha1))
