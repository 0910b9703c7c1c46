import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from datavalue.dataset import NoiseRecord, inject_label_noise, split_by_count, synth_blobs
from datavalue.evaluation import (addition_subsets, descending_order, detect, detection_f1,
                                  measure_runtime, point_addition_curve, point_removal_curve,
                                  removal_subsets, two_means_split)
from datavalue.utility import UtilitySpec, eval_utility
from datavalue.valuators import random_baseline


def test_two_means_examples():
    low, high = two_means_split([0.0, 0.1, 0.9, 1.0])
    assert low.tolist() == [0, 1] and high.tolist() == [2, 3]
    low, _ = two_means_split([0, 0, 1])
    assert low.tolist() == [0, 1]
    with pytest.raises(ValueError):
        two_means_split([5, 5, 5])


def test_two_means_matches_exhaustive_optimum():
    # in 1-D the optimal 2-means partition is a threshold split of the sorted values
    rng = np.random.default_rng(0)
    v = np.r_[rng.normal(0, 1, 40), rng.normal(6, 1, 60)]
    s = np.sort(v)
    costs = [s[:t].var() * t + s[t:].var() * (len(s) - t) for t in range(1, len(s))]
    t = int(np.argmin(costs)) + 1
    low, _ = two_means_split(v)
    assert set(low.tolist()) == set(np.flatnonzero(v <= s[t - 1]).tolist())


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), a=st.floats(0.01, 100), b=st.floats(-100, 100))
def test_two_means_affine_invariant(seed, a, b):
    v = np.random.default_rng(seed).normal(size=30)
    low1, _ = two_means_split(v, seed=1)
    low2, _ = two_means_split(a * v + b, seed=1)
    assert np.array_equal(low1, low2)


def test_f1_examples():
    assert detection_f1({1, 2, 3}, {2, 3, 4}) == pytest.approx(0.6667, abs=1e-4)
    assert detection_f1({1, 2}, NoiseRecord("label_flip", 0.2, frozenset({1, 2}))) == 1.0
    assert detection_f1({1}, {2}) == 0.0
    with pytest.raises(ValueError):
        detection_f1({1}, set())


@settings(max_examples=50, deadline=None)
@given(low=st.sets(st.integers(0, 30), min_size=1), truth=st.sets(st.integers(0, 30), min_size=1))
def test_f1_is_harmonic_mean(low, truth):
    inter = len(low & truth)
    f1 = detection_f1(low, truth)
    if inter == 0:
        assert f1 == 0
    else:
        p, r = inter / len(low), inter / len(truth)
        assert f1 == pytest.approx(2 * p * r / (p + r))


def test_detect_maps_to_row_ids():
    train = np.array([10, 11, 12, 13])
    res = detect([0.0, 1.0, 0.05, 0.95], NoiseRecord("label_flip", 0.5, frozenset({10, 12})), train)
    assert res.low_cluster == frozenset({10, 12}) and res.f1 == 1.0


def test_descending_ties_by_index():
    assert descending_order([1.0, 3.0, 1.0, 3.0]).tolist() == [1, 3, 0, 2]


def test_grid_and_errors():
    subs = removal_subsets(np.arange(50.0))
    assert list(subs) == [0, 5, 10]
    with pytest.raises(ValueError):
        removal_subsets(np.arange(9.0))
    with pytest.raises(ValueError):
        removal_subsets(np.arange(20.0), step=5)  # K = 4 < 5


def test_removal_addition_complementary():
    v = np.random.default_rng(0).normal(size=100)
    rem = removal_subsets(v)
    add = addition_subsets(-v)
    # reversing the ordering: removing the k top points of v leaves the m-k
    # bottom points, i.e. what adding m-k points in ascending order of -v would keep
    order = descending_order(v)
    for k, kept in rem.items():
        assert set(kept) == set(order[k:])
        assert set(np.setdiff1d(np.arange(100), kept)) == set(order[:k])
    assert set(add[20]) == set(order[:20])


@pytest.fixture(scope="module")
def sep_blobs():
    ds = synth_blobs(400, 2, 2, 6.0, 0)
    return ds, split_by_count(ds, 100, 50, 200, 0)


def test_removal_curve_definition(sep_blobs):
    ds, sp = sep_blobs
    Ut = UtilitySpec.on(ds, sp.test)
    vals = random_baseline(100, 0)
    curve = point_removal_curve(vals, Ut, ds, sp)
    assert curve.ks == [0, 5, 10, 15, 20]
    assert curve.perfs[0] == eval_utility(Ut, np.arange(100), ds, sp)
    assert curve.summary == pytest.approx(np.mean(curve.perfs[1:]))
    # separable data: losing a random fifth barely matters
    assert min(curve.perfs) >= curve.perfs[0] - 0.02


def test_addition_curve_definition(sep_blobs):
    ds, sp = sep_blobs
    Ut = UtilitySpec.on(ds, sp.test)
    curve = point_addition_curve(random_baseline(100, 1), Ut, ds, sp, step=10)
    counts = np.bincount(ds.labels[sp.test])
    assert curve.perfs[0] == pytest.approx(counts.max() / counts.sum())
    assert curve.ks == [0, 10, 20]
    assert curve.summary == pytest.approx(np.mean(curve.perfs[1:]))


def test_addition_all_points_order_free(sep_blobs):
    ds, sp = sep_blobs
    a = addition_subsets(np.arange(100.0), step=1)
    b = addition_subsets(np.arange(100.0)[::-1], step=1)
    assert np.array_equal(a[20], np.arange(20))
    # with the whole set added the subsets coincide whatever the order
    full_a = np.sort(descending_order(np.arange(100.0))[::-1])
    full_b = np.sort(descending_order(np.arange(100.0)[::-1])[::-1])
    assert np.array_equal(full_a, full_b)
    assert set(a[20]).isdisjoint(set(b[20]))


def test_oracle_addition_below_anti_oracle():
    # adding lowest-valued points first: an oracle that ranks flipped points lowest
    # trains on corrupted labels first, so its curve stays below the anti-oracle's
    ds = synth_blobs(600, 5, 2, 2.0, 1)
    sp = split_by_count(ds, 200, 50, 300, 1)
    noisy, rec = inject_label_noise(ds, sp, 0.2, 1)
    Ut = UtilitySpec.on(noisy, sp.test)
    flipped = rec.mask(sp.train).astype(float)
    oracle = point_addition_curve(-flipped, Ut, noisy, sp).summary
    anti = point_addition_curve(flipped, Ut, noisy, sp).summary
    assert oracle < anti


def test_removal_pivotal_point():
    # class 1 has a single training point; ranking it highest means the first
    # removal leaves a one-class set and test accuracy collapses to the majority rate
    ds = synth_blobs(500, 2, 2, 4.0, 3)
    sp = split_by_count(ds, 100, 50, 300, 3)
    yt = ds.labels[sp.train]
    ones, zeros = np.flatnonzero(yt == 1), np.flatnonzero(yt == 0)
    train = np.sort(np.r_[sp.train[zeros], sp.train[ones[:1]]])
    sub = type(sp)(train, sp.valid, sp.test)
    vals = np.where(ds.labels[train] == 1, 10.0, 0.0)
    curve = point_removal_curve(vals, UtilitySpec.on(ds, sp.test), ds, sub)
    assert curve.perfs[0] > 0.9
    assert all(p < curve.perfs[0] - 0.3 for p in curve.perfs[1:])


def test_measure_runtime_positive():
    out, secs = measure_runtime(sum, [1, 2, 3])
    assert out == 6 and secs > 0
