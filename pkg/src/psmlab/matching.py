"""Greedy 1:1 nearest-neighbour matching on the logit propensity score.

Treated units are visited in dataset order. Each takes the closest still
unmatched control; ties in distance go to the lower control index. A treated
unit whose closest control lies outside the caliper stays unmatched.
"""
from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

from .datagen import Dataset
from .errors import NoPairsFormed, OneClassOnly
from .numerics import sample_sd
from .propensity import PropensityFit


@dataclass(frozen=True)
class Caliper:
    multiplier: float
    width: float

    @classmethod
    def from_logit_ps(cls, multiplier: float, logit_ps) -> "Caliper":
        """Width = ``multiplier`` x sample SD of the full-sample logit PS."""
        if multiplier < 0:
            raise ValueError(f"caliper multiplier must be nonnegative, got {multiplier}")
        return cls(float(multiplier), float(multiplier) * sample_sd(logit_ps))


@dataclass(frozen=True, eq=False)
class MatchedSample:
    pairs: np.ndarray  # (k, 2) int: treated index, control index
    caliper: Caliper
    source: Dataset

    @property
    def n_pairs(self) -> int:
        return self.pairs.shape[0]

    @property
    def treated(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def control(self) -> np.ndarray:
        return self.pairs[:, 1]

    @property
    def units(self) -> np.ndarray:
        """Matched unit indices: all treated members, then all controls."""
        return np.concatenate([self.treated, self.control])

    def x(self) -> np.ndarray:
        return self.source.x[self.units]

    def a(self) -> np.ndarray:
        return self.source.a[self.units]

    def y(self) -> np.ndarray:
        return self.source.y[self.units]


class _SkipList:
    """Union-find pointers to the nearest unmatched slot left/right of a position."""

    def __init__(self, m: int):
        self.right = list(range(m + 1))  # slot m is a sentinel
        self.left = list(range(m + 1))   # shifted by one: left[0] is a sentinel

    @staticmethod
    def _find(parent, k):
        root = k
        while parent[root] != root:
            root = parent[root]
        while parent[k] != root:
            parent[k], k = root, parent[k]
        return root

    def first_at_or_after(self, k: int) -> int:
        return self._find(self.right, k)

    def last_before(self, k: int) -> int:
        """Largest unmatched slot < k, or -1."""
        return self._find(self.left, k) - 1

    def remove(self, j: int):
        self.right[j] = j + 1
        self.left[j + 1] = j


def greedy_match(score, treated, width: float) -> np.ndarray:
    """Greedy caliper matching without replacement.

    Parameters
    ----------
    score : (n,) array
        Matching score, normally the logit propensity score.
    treated : (n,) bool or 0/1 array
    width : float
        Maximum admissible ``|score_t - score_c|``.

    Returns
    -------
    (k, 2) int array of ``(treated_index, control_index)`` pairs, in the order
    they were formed. May be empty.
    """
    score = np.asarray(score, dtype=float)
    treated = np.asarray(treated).astype(bool)
    if score.shape != treated.shape:
        raise ValueError("score and treatment must have the same length")
    t_idx = np.flatnonzero(treated)
    c_idx = np.flatnonzero(~treated)
    order = np.lexsort((c_idx, score[c_idx]))
    values = score[c_idx][order].tolist()
    owners = c_idx[order].tolist()
    m = len(values)
    slots = _SkipList(m)
    pairs = []
    remaining = m
    for t in t_idx.tolist():
        if remaining == 0:
            break
        v = float(score[t])
        k = bisect_left(values, v)
        r = slots.first_at_or_after(k)
        l = slots.last_before(k)
        dr = abs(v - values[r]) if r < m else np.inf
        dl = abs(v - values[l]) if l >= 0 else np.inf
        best = min(dl, dr)
        if not best <= width:
            continue
        choice = None
        if dr == best:
            # r is the first unmatched slot of its value block, so it holds the
            # lowest unmatched control index with that score
            choice = r
        if dl == best:
            lj = slots.first_at_or_after(bisect_left(values, values[l]))
            if choice is None or owners[lj] < owners[choice]:
                choice = lj
        pairs.append((t, owners[choice]))
        slots.remove(choice)
        remaining -= 1
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def nearest_neighbor_match(ds: Dataset, fit: PropensityFit, caliper: Caliper) -> MatchedSample:
    """Match ``ds`` on ``fit.logit_ps`` within ``caliper.width``.

    Raises
    ------
    NoPairsFormed
        If no treated unit has an admissible control.
    """
    if fit.logit_ps.shape[0] != ds.n:
        raise ValueError("propensity fit is not aligned with the dataset")
    if ds.a.min() == ds.a.max():
        raise OneClassOnly("dataset contains a single treatment class")
    pairs = greedy_match(fit.logit_ps, ds.a, caliper.width)
    if pairs.shape[0] == 0:
        raise NoPairsFormed(f"no pairs within caliper width {caliper.width:.6g}")
    return MatchedSample(pairs, caliper, ds)


def pair_count_curve(ds: Dataset, fit: PropensityFit, multipliers) -> list[tuple[float, int]]:
    """Pair counts along a descending caliper schedule."""
    multipliers = [float(c) for c in multipliers]
    if any(b > a for a, b in zip(multipliers, multipliers[1:])):
        raise ValueError("caliper multipliers must be sorted in descending order")
    out = []
    for c in multipliers:
        cal = Caliper.from_logit_ps(c, fit.logit_ps)
        out.append((c, int(greedy_match(fit.logit_ps, ds.a, cal.width).shape[0])))
    return out
