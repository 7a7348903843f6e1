"""Small deterministic numerical kernel: seeded streams, SPD solves, descriptive stats.

Random streams are numpy ``PCG64`` generators keyed by a ``SeedSequence``.
Replicate ``i`` of a run seeded with ``s`` always draws from
``SeedSequence(s, spawn_key=(i, attempt))``, so results never depend on the
order in which replicates are executed. Normal deviates come from numpy's
ziggurat sampler, which is fixed for a given numpy major version.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import InsufficientRows, SingularMatrix

#: Pivot threshold, relative to the largest diagonal entry.
SINGULAR_RTOL = 1e-12


class RandomStream:
    """Single-owner random stream. Never share one between concurrent tasks."""

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.key))
        )

    @classmethod
    def substream(cls, base_seed: int, *index: int) -> "RandomStream":
        """Independent stream for ``(base_seed, index...)``."""
        return cls(base_seed, key=index)

    def standard_normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        """Uniform integers on the closed range ``[low, high]``."""
        return self._gen.integers(low, high, size=size, endpoint=True)

    def bernoulli(self, p, size=None) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if size is None:
            size = p.shape
        return (self._gen.random(size) < p).astype(np.int8)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, key={self.key})"


def cholesky(a) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises
    ------
    SingularMatrix
        If the matrix is not numerically positive definite, i.e. some pivot
        ``L[i, i]**2`` is at most ``1e-12`` times the largest diagonal entry.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(scale, 1.0)):
        raise ValueError("matrix is not symmetric")
    dmax = np.max(np.diag(a)) if a.size else 0.0
    if not dmax > 0:
        raise SingularMatrix("matrix has no positive diagonal entry")
    try:
        low = scipy.linalg.cholesky(a, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(f"matrix is not positive definite: {exc}") from None
    pivots = np.diag(low) ** 2
    if np.min(pivots) <= SINGULAR_RTOL * dmax:
        raise SingularMatrix(
            f"Cholesky pivot {np.min(pivots):.3e} below {SINGULAR_RTOL:g} x max diagonal"
        )
    return low


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive-definite ``a``.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: a is {a.shape}, b is {b.shape}")
    low = cholesky(a)
    return scipy.linalg.cho_solve((low, True), b, check_finite=False)


def spd_inverse(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    inv = solve_spd(a, np.eye(a.shape[0]))
    return (inv + inv.T) / 2.0


def covariance_matrix(x) -> np.ndarray:
    """Unbiased (divisor ``n - 1``) sample covariance of the columns of ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise InsufficientRows(f"covariance needs at least 2 rows, got {n}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    return (cov + cov.T) / 2.0


def sample_sd(x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        raise InsufficientRows(f"standard deviation needs at least 2 values, got {x.size}")
    return float(np.std(x, ddof=1))

