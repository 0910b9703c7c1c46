import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import betabinom

from conftest import brute_force_shapley
from datavalue.dataset import Dataset, SplitIndices, inject_label_noise, split_by_count, synth_blobs
from datavalue.marginal import ConvergenceConfig, MarginalAccumulator, run_tmc
from datavalue.utility import FunctionUtility, UtilitySpec, knn_utility, volume_utility
from datavalue.valuators import (ame, beta_shapley, beta_weights, data_banzhaf, data_oob,
                                 data_shapley, exact_marginals, influence_subset, knn_shapley,
                                 lava, loo, oob_scores, random_baseline, semivalue,
                                 shapley_weights, volume_shapley)

NO_SPLIT = np.array([], dtype=int)


def _toy(train_X, train_y, valid_X, valid_y):
    X = np.vstack([train_X, valid_X]).astype(float)
    y = np.concatenate([train_y, valid_y]).astype(int)
    m = len(train_y)
    return Dataset(X, y), SplitIndices(np.arange(m), np.arange(m, len(y)), NO_SPLIT)


# --- LOO ----------------------------------------------------------------------


def test_loo_additive():
    assert np.allclose(loo(FunctionUtility(lambda S: len(S) / 5, 5), 5).values, 0.2)


def test_loo_arithmetic():
    U = FunctionUtility(lambda S: 0.9 if len(S) == 3 else 0.8, 3)
    assert np.allclose(loo(U, 3).values, 0.1)


def test_loo_single_point():
    U = FunctionUtility(lambda S: 0.25 + 0.5 * len(S), 1)
    assert loo(U, 1).values[0] == pytest.approx(0.5)


# --- exact semivalues ---------------------------------------------------------


def _random_game(m, seed):
    rng = np.random.default_rng(seed)
    table = {S: rng.uniform() for r in range(m + 1) for S in itertools.combinations(range(m), r)}
    return FunctionUtility(lambda S: table[tuple(int(i) for i in S)], m)


@pytest.mark.parametrize("seed", range(4))
def test_exact_shapley_matches_oracle(seed):
    U = _random_game(6, seed)
    phi = semivalue(exact_marginals(U, 6), shapley_weights(6))
    assert np.allclose(phi, brute_force_shapley(U, 6), atol=1e-12)
    assert phi.sum() == pytest.approx(U(np.arange(6)) - U([]), abs=1e-10)


def test_axioms_symmetry_null_player():
    w = np.array([0.3, 0.3, 0.0, 0.5])
    U = FunctionUtility(lambda S: float(np.sqrt(w[S].sum())), 4)
    marg = exact_marginals(U, 4)
    for weights in (shapley_weights(4), beta_weights(4, 1, 1), beta_weights(4, 4, 1)):
        phi = semivalue(marg, weights)
        assert phi[0] == pytest.approx(phi[1], abs=1e-12)
        assert phi[2] == pytest.approx(0.0, abs=1e-12)


def test_beta_weights_examples():
    assert np.allclose(beta_weights(2, 4, 1), [0.8, 0.2], atol=1e-15)
    assert np.array_equal(beta_weights(7, 1, 1), np.full(7, 1 / 7))
    assert beta_weights(1000, 4, 1).sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("m,a,b", [(5, 4, 1), (30, 16, 1), (12, 2.5, 3.0)])
def test_beta_weights_are_shifted_betabinomial(m, a, b):
    # j-1 ~ BetaBinomial(m-1, beta, alpha)
    ref = betabinom.pmf(np.arange(m), m - 1, b, a)
    assert np.allclose(beta_weights(m, a, b), ref, rtol=1e-10)


def test_beta_weights_invalid():
    with pytest.raises(ValueError):
        beta_weights(3, 0, 1)


def test_beta_scaling_preserves_ranking():
    acc = run_tmc(_random_game(6, 7), 6, ConvergenceConfig(min_permutations=50), seed=0)
    base = beta_shapley(acc).values
    acc.sums *= 3.0
    scaled = beta_shapley(acc).values
    assert np.allclose(scaled, 3 * base)
    assert np.array_equal(np.argsort(scaled), np.argsort(base))


def test_beta_one_one_equals_shapley():
    acc = run_tmc(_random_game(5, 3), 5, ConvergenceConfig(min_permutations=100), seed=2)
    assert np.allclose(beta_shapley(acc, 1, 1).values, data_shapley(acc).values)


def test_semivalue_renormalises_unobserved():
    marg = np.array([[1.0, np.nan], [2.0, 4.0]])
    assert semivalue(marg, np.array([0.8, 0.2])).tolist() == [1.0, pytest.approx(2.4)]


# --- TMC-based ------------------------------------------------------------------


def test_data_shapley_additive():
    U = FunctionUtility(lambda S: len(S) / 6, 6)
    acc = run_tmc(U, 6, ConvergenceConfig(min_permutations=20), seed=0)
    assert np.allclose(data_shapley(acc).values, 1 / 6)


def test_data_shapley_vs_oracle_small():
    U = _random_game(5, 11)
    cfg = ConvergenceConfig(gr_threshold=1.0, min_permutations=3000, max_permutations=3000)
    acc = run_tmc(U, 5, cfg, seed=4)
    assert np.allclose(data_shapley(acc).values, brute_force_shapley(U, 5), atol=0.03)


def test_volume_shapley_two_points():
    ds, sp = _toy(np.array([[1.0, 0.0], [0.0, 2.0]]), [0, 1], np.zeros((1, 2)), [0])
    # a single point in d=2 has a rank-1 Gram, so both singletons have volume 0
    # and only the second arrival in either order gains the full volume 2
    U = FunctionUtility(lambda S: volume_utility(S, ds, sp), 2)
    assert U([0]) == U([1]) == 0.0 and U([0, 1]) == pytest.approx(2.0)
    exact = brute_force_shapley(U, 2)
    assert np.allclose(exact, [1.0, 1.0])
    vals = volume_shapley(ds, sp, ConvergenceConfig(min_permutations=100), seed=0).values
    assert np.allclose(vals, exact, atol=0.1) and vals.sum() == pytest.approx(2.0)


def test_volume_shapley_label_free_and_symmetric():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(6, 2))
    X[4] = X[1]
    y = rng.integers(0, 2, size=6)
    ds, sp = _toy(X, y, np.zeros((1, 2)), [0])
    flipped, _ = _toy(X, 1 - y, np.zeros((1, 2)), [1])
    cfg = ConvergenceConfig(min_permutations=200)
    a = volume_shapley(ds, sp, cfg, 3).values
    b = volume_shapley(flipped, sp, cfg, 3).values
    assert np.array_equal(a, b)
    exact = brute_force_shapley(FunctionUtility(lambda S: volume_utility(S, ds, sp), 6), 6)
    assert exact[1] == pytest.approx(exact[4], abs=1e-12)


# --- KNN-Shapley -------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("k", [1, 2, 3])
def test_knn_shapley_matches_brute_force(seed, k):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 9))
    ds, sp = _toy(rng.normal(size=(m, 2)), rng.integers(0, 3, size=m),
                  rng.normal(size=(4, 2)), rng.integers(0, 3, size=4))
    spec = UtilitySpec.on(ds, sp.valid, metric="knn_accuracy", k=k)
    exact = brute_force_shapley(FunctionUtility(lambda S: knn_utility(spec, S, ds, sp), m), m)
    vals = knn_shapley(ds, sp, k).values
    assert np.allclose(vals, exact, atol=1e-10)
    assert vals.sum() == pytest.approx(knn_utility(spec, np.arange(m), ds, sp), abs=1e-10)


def test_knn_shapley_ties_by_index():
    # duplicated training points at equal distance
    X = np.array([[1.0], [1.0], [2.0]])
    ds, sp = _toy(X, [0, 1, 0], np.array([[0.0]]), [0])
    spec = UtilitySpec.on(ds, sp.valid, metric="knn_accuracy", k=1)
    exact = brute_force_shapley(FunctionUtility(lambda S: knn_utility(spec, S, ds, sp), 3), 3)
    assert np.allclose(knn_shapley(ds, sp, 1).values, exact, atol=1e-12)


def test_knn_shapley_single_point():
    ds, sp = _toy(np.array([[0.0]]), [1], np.array([[1.0]]), [1])
    assert knn_shapley(ds, sp, 1).values.tolist() == [1.0]


def test_knn_shapley_default_k():
    ds = synth_blobs(150, 2, 2, 1.0, 0)
    sp = split_by_count(ds, 100, 20, 0, 0)
    assert knn_shapley(ds, sp).meta["k"] == 10


def test_knn_shapley_rejects_regression():
    ds = Dataset(np.zeros((3, 1)), np.array([0.1, 0.2, 0.3]), "regression")
    sp = SplitIndices(np.array([0, 1]), np.array([2]), NO_SPLIT)
    with pytest.raises(ValueError):
        knn_shapley(ds, sp)


# --- subset sampling ---------------------------------------------------------------


def test_banzhaf_additive():
    U = FunctionUtility(lambda S: len(S) / 10, 10)
    vals = data_banzhaf(U, 10, 5000, seed=0).values
    assert np.allclose(vals, 0.1, atol=0.02)


def test_banzhaf_constant_and_deterministic():
    U = FunctionUtility(lambda S: 0.4, 8)
    assert np.allclose(data_banzhaf(U, 8, 500, seed=1).values, 0.0)
    V = FunctionUtility(lambda S: float(np.sin(S.sum())), 8)
    assert np.array_equal(data_banzhaf(V, 8, 300, 5).values, data_banzhaf(V, 8, 300, 5).values)


def test_banzhaf_empty_side_warns():
    U = FunctionUtility(lambda S: len(S), 30)
    vv = data_banzhaf(U, 30, 2, seed=0)
    assert vv.meta.get("warnings")
    masks = np.random.default_rng(0).random((2, 30)) < 0.5
    one_sided = masks.all(axis=0) | ~masks.any(axis=0)
    assert one_sided.any() and np.all(vv.values[one_sided] == 0.0)


@pytest.mark.parametrize("estimator", ["banzhaf", "influence"])
def test_additive_game_recovers_weights(estimator):
    c = np.linspace(-0.5, 1.0, 10)
    U = FunctionUtility(lambda S: float(c[S].sum()), 10)
    if estimator == "banzhaf":
        vv = data_banzhaf(U, 10, 5000, seed=3)
        p = 0.5
    else:
        vv = influence_subset(U, 10, 5000, seed=3)
        p = 0.7
    # difference of two group means; each U sums ~p*10 weights with variance bounded by
    # sum c_j^2 * p(1-p) -> 3 sigma bound on the contrast
    var_u = (c ** 2).sum() * p * (1 - p)
    sigma = np.sqrt(var_u / (5000 * p) + var_u / (5000 * (1 - p)))
    if estimator == "influence":
        # fixed-size subsets: the contrast is c_i minus the mean of the others, scaled
        m = 10
        target = c - (c.sum() - c) / (m - 1)
    else:
        target = c
    assert np.all(np.abs(vv.values - target) <= 3 * sigma + 1e-12)


def test_influence_exhaustive_indicator():
    U = FunctionUtility(lambda S: float(0 in S), 4)
    vv = influence_subset(U, 4, exhaustive=True)
    assert vv.meta["subset_size"] == 2 and vv.meta["models"] == 6
    assert vv.values[0] == 1.0
    assert np.allclose(vv.values[1:], -1 / 3, atol=1e-15)


def test_influence_sampled_close_to_exhaustive():
    rng = np.random.default_rng(5)
    w = rng.normal(size=4)
    U = FunctionUtility(lambda S: float(np.tanh(w[S].sum())), 4)
    ex = influence_subset(U, 4, exhaustive=True).values
    sampled = influence_subset(U, 4, 5000, seed=1).values
    assert np.allclose(sampled, ex, atol=0.05)


def test_influence_constant_and_errors():
    assert np.allclose(influence_subset(FunctionUtility(lambda S: 1.0, 6), 6, 200).values, 0)
    with pytest.raises(ValueError):
        influence_subset(FunctionUtility(len, 1), 1)


def _sparse_game(seed, n_signal=3, m=20):
    rng = np.random.default_rng(seed)
    c = np.zeros(m)
    idx = rng.choice(m, n_signal, replace=False)
    c[idx] = rng.uniform(0.5, 1.0, n_signal) * rng.choice([-1, 1], n_signal)
    return c, FunctionUtility(lambda S: float(c[S].sum()), m)


def test_ame_planted_single_signal():
    c, U = _sparse_game(0, n_signal=1)
    vals = ame(U, 20, 2000, seed=0).values
    assert set(np.flatnonzero(vals)) == set(np.flatnonzero(c))
    assert np.allclose(vals, c, atol=0.1 * np.abs(c).max())


def test_ame_constant_game():
    vals = ame(FunctionUtility(lambda S: 0.5, 10), 10, 200, seed=0).values
    assert np.all(vals == 0)


def test_ame_errors():
    U = FunctionUtility(len, 5)
    with pytest.raises(ValueError):
        ame(U, 5, 30)
    with pytest.raises(ValueError):
        ame(U, 5, 100, rates=(0.0, 0.5))


# --- LAVA ----------------------------------------------------------------------------


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_lava_sums_to_zero(seed):
    rng = np.random.default_rng(seed)
    ds, sp = _toy(rng.normal(size=(15, 3)), rng.integers(0, 2, 15),
                  rng.normal(size=(7, 3)), rng.integers(0, 2, 7))
    assert abs(lava(ds, sp).values.sum()) < 1e-9


def test_lava_zero_cost():
    X = np.ones((5, 2))
    ds, sp = _toy(X[:3], [0, 0, 0], X[3:], [0, 0])
    assert np.allclose(lava(ds, sp).values, 0)


def test_lava_duplicates_equal():
    rng = np.random.default_rng(2)
    Xt = rng.normal(size=(8, 2))
    Xt[5] = Xt[2]
    yt = rng.integers(0, 2, 8)
    yt[5] = yt[2]
    ds, sp = _toy(Xt, yt, rng.normal(size=(5, 2)), rng.integers(0, 2, 5))
    vals = lava(ds, sp).values
    assert vals[2] == pytest.approx(vals[5], abs=1e-9)


def test_lava_nonconvergence_in_meta():
    rng = np.random.default_rng(3)
    ds, sp = _toy(rng.normal(size=(20, 2)), rng.integers(0, 2, 20),
                  rng.normal(size=(10, 2)), rng.integers(0, 2, 10))
    vv = lava(ds, sp, epsilon=1e-4, max_iters=2, tol=1e-14)
    assert vv.meta["converged"] is False and vv.meta["warnings"]


def test_lava_needs_two_points():
    ds, sp = _toy(np.zeros((1, 1)), [0], np.ones((1, 1)), [0])
    with pytest.raises(ValueError):
        lava(ds, sp)


# --- Data-OOB ------------------------------------------------------------------------


class _FixedTree:
    def __init__(self, out):
        self.out = np.asarray(out)

    def predict(self, X):
        return self.out[: len(X)]


class _FakeBagging:
    def __init__(self, counts, trees):
        self.oob_counts = np.asarray(counts)
        self.trees = trees


def test_oob_single_term_average():
    y = np.array([1, 0, 1])
    # tree 1 is the only one with point 0 out-of-bag, and it predicts 0
    model = _FakeBagging([[1, 0, 2], [0, 2, 1]], [_FixedTree([0]), _FixedTree([0])])
    psi = oob_scores(model, np.zeros((3, 1)), y, "classification")
    assert psi[0] == 0.0 and psi[1] == 1.0 and np.isnan(psi[2])


def test_oob_all_correct():
    ds = synth_blobs(120, 2, 2, 50.0, 0)
    sp = split_by_count(ds, 100, 10, 10, 0)
    vals = data_oob(ds, sp, B=50, seed=0).values
    assert np.all(vals == 1.0)


def test_oob_flipped_points_lower():
    ds = synth_blobs(700, 10, 2, 2.0, 0)
    sp = split_by_count(ds, 500, 100, 100, 0)
    noisy, rec = inject_label_noise(ds, sp, 0.2, 0)
    vals = data_oob(noisy, sp, B=200, seed=0).values
    mask = rec.mask(sp.train)
    assert vals[mask].mean() < vals[~mask].mean()


def test_oob_never_oob_gets_mean():
    ds = synth_blobs(30, 2, 2, 2.0, 0)
    sp = split_by_count(ds, 20, 5, 5, 0)
    vv = data_oob(ds, sp, B=1, seed=0)
    assert vv.meta["warnings"]
    assert np.all(np.isfinite(vv.values))


def test_oob_regression_nonpositive():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(60, 2))
    ds = Dataset(X, X[:, 0] + 0.1 * rng.normal(size=60), "regression")
    sp = split_by_count(ds, 40, 10, 10, 0)
    assert np.all(data_oob(ds, sp, B=30, seed=0).values <= 0)


# --- random baseline -------------------------------------------------------------------


def test_random_baseline():
    a = random_baseline(50, 3).values
    assert np.array_equal(a, random_baseline(50, 3).values)
    assert np.all((a >= 0) & (a < 1))
    assert len(random_baseline(1, 0)) == 1
