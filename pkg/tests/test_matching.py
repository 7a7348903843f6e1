import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from oracles import greedy_trace
from psmlab.datagen import Dataset, generate_dataset, linear_outcome
from psmlab.errors import NoPairsFormed
from psmlab.matching import Caliper, greedy_match, nearest_neighbor_match, pair_count_curve
from psmlab.numerics import RandomStream
from psmlab.propensity import PropensityFit, fit_logistic


def make_fit(logit_ps):
    logit_ps = np.asarray(logit_ps, dtype=float)
    return PropensityFit(0.0, np.zeros(1), expit(logit_ps), logit_ps, True, 0, 0.0, 0.0)


def make_ds(a):
    a = np.asarray(a)
    return Dataset(np.zeros((len(a), 1)), a, np.zeros(len(a)))


def test_unique_nearest_within_caliper():
    ds = make_ds([1, 0, 0])
    m = nearest_neighbor_match(ds, make_fit([0.0, 0.1, 0.5]), Caliper(1.0, 0.2))
    assert m.pairs.tolist() == [[0, 1]]


def test_caliper_excludes_all():
    ds = make_ds([1, 0])
    with pytest.raises(NoPairsFormed):
        nearest_neighbor_match(ds, make_fit([0.0, 0.5]), Caliper(1.0, 0.2))


def test_ties_go_to_lower_control_index():
    # controls at -0.1 (index 3) and +0.1 (index 1) are equally distant
    pairs = greedy_match([0.0, 0.1, 5.0, -0.1], [1, 0, 0, 0], 1.0)
    assert pairs.tolist() == [[0, 1]]
    pairs = greedy_match([0.0, -0.1, 5.0, 0.1, 0.1], [1, 0, 0, 0, 0], 1.0)
    assert pairs.tolist() == [[0, 1]]
    pairs = greedy_match([0.2, 0.2, 0.2, 0.2], [0, 1, 0, 1], 0.0)
    assert pairs.tolist() == [[1, 0], [3, 2]]


def test_dataset_order_matters():
    # the first treated unit takes the shared best control
    pairs = greedy_match([0.0, 0.05, 0.06, 1.0], [1, 1, 0, 0], 10.0)
    assert pairs.tolist() == [[0, 2], [1, 3]]


def test_four_by_six_random_instances_match_trace():
    rng = np.random.default_rng(46)
    for _ in range(300):
        a = rng.permutation([1] * 4 + [0] * 6)
        score = rng.standard_normal(10)
        assert greedy_match(score, a, 1e9).tolist() == [list(p) for p in greedy_trace(score, a, 1e9)]


@given(
    units=st.lists(
        st.tuples(st.integers(-6, 6).map(lambda v: v / 4), st.booleans()), min_size=1, max_size=12
    ),
    width=st.sampled_from([0.0, 0.25, 0.5, 1.0, 100.0]),
)
@settings(max_examples=500, deadline=None)
def test_matches_trace_with_ties(units, width):
    score = [s for s, _ in units]
    a = [int(t) for _, t in units]
    got = greedy_match(score, a, width)
    assert got.tolist() == [list(p) for p in greedy_trace(score, a, width)]
    flat = got.ravel().tolist()
    assert len(flat) == len(set(flat))
    for t, c in got.tolist():
        assert a[t] == 1 and a[c] == 0
        assert abs(score[t] - score[c]) <= width


def test_pair_counts_monotone_over_schedule():
    rng = np.random.default_rng(7)
    schedule = [20, 1, 0.2, 0.02, 0.002, 0.0002, 0.0]
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        a = rng.binomial(1, 0.4, size=n)
        if a.min() == a.max():
            a[0] = 1 - a[0]
        ds = make_ds(a)
        counts = [k for _, k in pair_count_curve(ds, make_fit(rng.standard_normal(n)), schedule)]
        assert all(x >= y for x, y in zip(counts, counts[1:]))
        assert counts[-1] == 0
        assert counts[0] <= min(a.sum(), n - a.sum())


def test_schedule_must_descend():
    with pytest.raises(ValueError):
        pair_count_curve(make_ds([1, 0]), make_fit([0.0, 1.0]), [0.2, 1.0])


def test_wide_caliper_matches_every_treated_unit():
    alpha1 = np.full(5, 1 / np.sqrt(5))
    ds = generate_dataset(RandomStream(8), 1500, -0.9, alpha1, linear_outcome(0.5, np.zeros(5)))
    fit = fit_logistic(ds.x, ds.a)
    (_, count), = pair_count_curve(ds, fit, [20])
    assert count == int(ds.a.sum())


def test_caliper_width_from_sample_sd():
    lps = np.array([0.0, 1.0, 2.0, 3.0])
    cal = Caliper.from_logit_ps(0.2, lps)
    assert cal.width == pytest.approx(0.2 * np.std(lps, ddof=1), abs=1e-12)
    with pytest.raises(ValueError):
        Caliper.from_logit_ps(-1.0, lps)


def test_exact_duplicates_match_at_zero_caliper():
    rng = np.random.default_rng(9)
    xt = rng.standard_normal((30, 3))
    extra = rng.standard_normal((20, 3))
    x = np.vstack([xt, xt[rng.permutation(30)], extra])
    a = np.array([1] * 30 + [0] * 50)
    ds = Dataset(x, a, np.zeros(80))
    fit = fit_logistic(ds.x, ds.a)
    m = nearest_neighbor_match(ds, fit, Caliper(0.0, 0.0))
    assert m.n_pairs == 30
    np.testing.assert_array_equal(ds.x[m.treated], ds.x[m.control])
