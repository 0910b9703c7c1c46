"""Data valuation algorithms.

Every public valuator returns a :class:`ValueVector` aligned with the
training split. Utilities are callables ``U(positions) -> float`` over
training positions ``0..m-1`` (see :mod:`datavalue.utility`).
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.special import betaln, gammaln

from .dataset import Dataset, SplitIndices
from .lasso import lasso_cv
from .learners import LearnerSpec, fit
from .marginal import ConvergenceConfig, MarginalAccumulator, run_tmc
from .ot import OTProblem, ground_cost, sinkhorn_duals
from .utility import FunctionUtility, volume_utility

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ValueVector:
    values: np.ndarray
    algorithm: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{self.algorithm}: non-finite data values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


def _warn(meta: dict, msg: str):
    logger.warning(msg)
    meta.setdefault("warnings", []).append(msg)


def loo(U, m: int) -> ValueVector:
    """``U(D) - U(D minus i)`` for every point; ``m + 1`` utility calls."""
    if m < 1:
        raise ValueError("empty training split")
    t0 = time.perf_counter()
    full = np.arange(m)
    u_all = U(full)
    vals = np.array([u_all - U(np.delete(full, i)) for i in range(m)])
    return ValueVector(vals, "loo", {"utility_calls": m + 1, "seconds": time.perf_counter() - t0})


# --- semivalues over marginal contributions ------------------------------------


def exact_marginals(U, m: int) -> np.ndarray:
    """Exact ``(m, m)`` marginal contributions by enumerating every subset.

    Entry ``[i, j]`` averages ``U(S + i) - U(S)`` over all ``S`` of size ``j``
    not containing ``i``. Exponential in ``m``; meant for ``m <= 12``.
    """
    if m > 16:
        raise ValueError("exhaustive enumeration is limited to m <= 16")
    values = {}
    for r in range(m + 1):
        for S in itertools.combinations(range(m), r):
            values[S] = U(np.array(S, dtype=np.int64))
    out = np.zeros((m, m))
    for i in range(m):
        others = [p for p in range(m) if p != i]
        for j in range(m):
            total = 0.0
            for S in itertools.combinations(others, j):
                total += values[tuple(sorted(S + (i,)))] - values[S]
            out[i, j] = total / comb(m - 1, j)
    return out


def shapley_weights(m: int) -> np.ndarray:
    return np.full(m, 1.0 / m)


def beta_weights(m: int, alpha: float = 4.0, beta: float = 1.0) -> np.ndarray:
    """Weights ``C(m-1, j-1) B(j+beta-1, m-j+alpha) / B(alpha, beta)``, ``j = 1..m``.

    Evaluated in log-gamma space; these are Beta-binomial probabilities and
    sum to one.
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be > 0")
    if alpha == 1 and beta == 1:
        return shapley_weights(m)
    j = np.arange(1, m + 1)
    log_binom = gammaln(m) - gammaln(j) - gammaln(m - j + 1)
    return np.exp(log_binom + betaln(j + beta - 1, m - j + alpha) - betaln(alpha, beta))


def semivalue(marginals: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``sum_j w_j * marginals[:, j]``, renormalising over observed (non-NaN) cells."""
    observed = ~np.isnan(marginals)
    if np.all(observed):
        return marginals @ weights
    mass = observed @ weights
    if np.any(mass == 0):
        raise ValueError("some point has no observed cardinality")
    return np.where(observed, marginals, 0.0) @ weights / mass


def data_shapley(acc: MarginalAccumulator) -> ValueVector:
    return ValueVector(acc.point_means(), "data_shapley",
                       {"permutations": acc.permutations_used, "converged": acc.converged})


def beta_shapley(acc: MarginalAccumulator, alpha: float = 4.0, beta: float = 1.0) -> ValueVector:
    """Beta-weighted semivalue of the per-cardinality marginal estimates.

    ``(1, 1)`` has uniform weights, so it returns the Shapley point means
    directly rather than the stratified average of the same samples.
    """
    if alpha == 1 and beta == 1:
        vals = acc.point_means()
    else:
        vals = semivalue(acc.marginals(), beta_weights(acc.m, alpha, beta))
    return ValueVector(vals, "beta_shapley", {"permutations": acc.permutations_used,
                                              "alpha": alpha, "beta": beta,
                                              "converged": acc.converged})


def volume_shapley(ds: Dataset, split: SplitIndices, cfg: ConvergenceConfig = ConvergenceConfig(),
                   seed: int = 0) -> ValueVector:
    """Shapley values of the (label-free) volume utility, estimated by TMC."""
    m = len(split.train)
    U = FunctionUtility(lambda s: volume_utility(s, ds, split), m)
    acc = run_tmc(U, m, cfg, seed)
    return ValueVector(acc.point_means(), "volume_shapley",
                       {"permutations": acc.permutations_used, "converged": acc.converged})


# --- KNN-Shapley -------------------------------------------------------------------


def knn_shapley(ds: Dataset, split: SplitIndices, k: int | None = None) -> ValueVector:
    """Closed-form Shapley values of the KNN utility.

    For each validation point the training points are ranked by distance
    (ties to the lower index) and values are filled in from the farthest
    point inwards. ``k`` defaults to 10% of the training points.
    """
    if ds.task != "classification":
        raise ValueError("knn_shapley supports classification only")
    Xt, yt = ds.features[split.train], ds.labels[split.train]
    Xv, yv = ds.features[split.valid], ds.labels[split.valid]
    N = len(yt)
    if N < 1:
        raise ValueError("empty training split")
    if k is None:
        k = max(1, N // 10)
    if k < 1:
        raise ValueError("k must be >= 1")
    sq = (Xv ** 2).sum(1)[:, None] - 2 * Xv @ Xt.T + (Xt ** 2).sum(1)[None, :]
    order = np.argsort(np.maximum(sq, 0.0), axis=1, kind="stable")      # (n_val, N)
    match = (yt[order] == yv[:, None]).astype(float)
    ranks = np.arange(1, N + 1)
    s = np.empty_like(match)
    s[:, -1] = match[:, -1] * min(k, N) / (N * k)
    # s_i = s_{i+1} + (a_i - a_{i+1}) / k * min(k, i) / i, rank i = 1..N-1
    step = (match[:, :-1] - match[:, 1:]) / k * (np.minimum(k, ranks[:-1]) / ranks[:-1])
    s[:, :-1] = s[:, -1:] + np.cumsum(step[:, ::-1], axis=1)[:, ::-1]
    vals = np.zeros(N)
    np.add.at(vals, order.ravel(), s.ravel())
    return ValueVector(vals / len(yv), "knn_shapley", {"k": k})


# --- subset-sampling estimators -------------------------------------------------------


def _in_out_contrast(masks: np.ndarray, utilities: np.ndarray, meta: dict, name: str) -> np.ndarray:
    n_in = masks.sum(axis=0)
    n_out = len(masks) - n_in
    sum_in = utilities @ masks
    sum_out = utilities.sum() - sum_in
    ok = (n_in > 0) & (n_out > 0)
    if not ok.all():
        _warn(meta, f"{name}: {int((~ok).sum())} point(s) never/always sampled; value set to 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = sum_in / n_in - sum_out / n_out
    return np.where(ok, vals, 0.0)


def _evaluate(U, masks) -> np.ndarray:
    return np.array([U(np.flatnonzero(row)) for row in masks])


def data_banzhaf(U, m: int, n_subsets: int = 1000, seed: int = 0) -> ValueVector:
    """Maximum-sample-reuse Banzhaf estimate.

    Each sampled subset includes every point independently with probability
    1/2; a point's value is the mean utility of subsets containing it minus
    the mean utility of subsets without it.
    """
    if n_subsets < 2:
        raise ValueError("n_subsets must be >= 2")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    masks = rng.random((n_subsets, m)) < 0.5
    meta = {"models": n_subsets}
    vals = _in_out_contrast(masks, _evaluate(U, masks), meta, "data_banzhaf")
    meta["seconds"] = time.perf_counter() - t0
    return ValueVector(vals, "data_banzhaf", meta)


def influence_subset(U, m: int, n_subsets: int = 1000, seed: int = 0,
                     exhaustive: bool = False) -> ValueVector:
    """Difference of mean utility over size-``floor(0.7 m)`` subsets with and without each point.

    With ``exhaustive=True`` every subset of that size is used once instead
    of sampling.
    """
    if m < 2:
        raise ValueError("influence_subset needs m >= 2")
    M = int(np.floor(0.7 * m))
    if M == 0:
        raise ValueError("subset size floor(0.7 m) is zero")
    meta = {"subset_size": M}
    if exhaustive:
        combos = list(itertools.combinations(range(m), M))
        masks = np.zeros((len(combos), m), dtype=bool)
        for r, c in enumerate(combos):
            masks[r, list(c)] = True
    else:
        rng = np.random.default_rng(seed)
        masks = np.zeros((n_subsets, m), dtype=bool)
        for r in range(n_subsets):
            masks[r, rng.choice(m, size=M, replace=False)] = True
    meta["models"] = len(masks)
    vals = _in_out_contrast(masks, _evaluate(U, masks), meta, "influence_subset")
    return ValueVector(vals, "influence_subset", meta)


AME_RATES = (0.2, 0.4, 0.6, 0.8)


def ame(U, m: int, n_subsets: int = 1000, rates=AME_RATES, seed: int = 0) -> ValueVector:
    """Average marginal effect via cross-validated LASSO on sampled subsets.

    Each subset draws an inclusion rate ``p`` from ``rates`` and includes
    points independently with probability ``p``. The design entry for point
    ``i`` is ``1/p`` if included and ``-1/(1-p)`` otherwise. The penalty is
    picked by 5-fold CV with the one-standard-error rule and the selected
    support is refit by least squares. Coefficients are multiplied by the
    mean of ``1 / (p (1 - p))`` over the sampled subsets, so that on an
    additive game they estimate the per-point contribution itself.
    """
    rates = np.asarray(sorted(rates), dtype=float)
    if n_subsets < 10 * len(rates):
        raise ValueError("n_subsets must be at least 10 per inclusion rate")
    if np.any((rates <= 0) | (rates >= 1)):
        raise ValueError("inclusion rates must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    p = rates[rng.integers(0, len(rates), size=n_subsets)]
    masks = rng.random((n_subsets, m)) < p[:, None]
    if np.all(masks == masks[0]):
        raise ValueError("degenerate AME design: all sampled subsets identical")
    design = np.where(masks, 1.0 / p[:, None], -1.0 / (1.0 - p[:, None]))
    utilities = _evaluate(U, masks)
    fitres = lasso_cv(design, utilities, rule="1se", refit=True)
    scale = float(np.mean(1.0 / (p * (1.0 - p))))
    return ValueVector(fitres.coef * scale, "ame",
                       {"models": n_subsets, "lambda": fitres.lam, "scale": scale})


# --- LAVA ------------------------------------------------------------------------------


def lava(ds: Dataset, split: SplitIndices, label_weight: float | None = None,
         epsilon: float | None = None, tol: float = 1e-6, max_iters: int = 5000) -> ValueVector:
    """Negated calibrated gradient of the train-to-validation transport cost.

    ``h`` are the training-side dual potentials; the calibrated gradient of
    point ``i`` is ``h_i - mean_{j != i} h_j``. Points whose extra mass would
    raise the transport cost get low values. Values always sum to zero.
    """
    m = len(split.train)
    if m < 2:
        raise ValueError("lava needs at least two training points")
    cost = ground_cost(ds, split, label_weight)
    duals = sinkhorn_duals(OTProblem.uniform(cost, epsilon, tol=tol, max_iters=max_iters))
    h = duals.h
    grad = h - (h.sum() - h) / (m - 1)
    meta = {"marginal_err": duals.marginal_err, "converged": duals.converged,
            "iterations": duals.iterations}
    if not duals.converged:
        _warn(meta, f"lava: Sinkhorn stopped at marginal error {duals.marginal_err:.3g}")
    return ValueVector(-grad, "lava", meta)


# --- Data-OOB --------------------------------------------------------------------------


def oob_scores(model, X, y, task: str) -> np.ndarray:
    """Per-point OOB average of the score function over a fitted bagging model.

    Returns NaN for points that were never out-of-bag.
    """
    oob = model.oob_counts == 0                              # (B, m)
    num = np.zeros(len(y))
    for b, tree in enumerate(model.trees):
        rows = np.flatnonzero(oob[b])
        if rows.size == 0:
            continue
        pred = tree.predict(X[rows])
        num[rows] += (pred == y[rows]) if task == "classification" else -(y[rows] - pred) ** 2
    den = oob.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / den, np.nan)


def data_oob(ds: Dataset, split: SplitIndices, B: int = 1000, max_depth: int = 6,
             min_split: int = 2, seed: int = 0) -> ValueVector:
    """Out-of-bag accuracy (or negative squared error) of each point under tree bagging."""
    if B < 1:
        raise ValueError("B must be >= 1")
    t0 = time.perf_counter()
    X, y = ds.features[split.train], ds.labels[split.train]
    spec = LearnerSpec("bagging", {"B": B, "seed": seed, "max_depth": max_depth,
                                   "min_split": min_split})
    model = fit(spec, X, y, ds.task, ds.n_classes or None)
    psi = oob_scores(model, X, y, ds.task)
    meta = {"models": B}
    missing = np.isnan(psi)
    if missing.any():
        _warn(meta, f"data_oob: {int(missing.sum())} point(s) never out-of-bag; assigned the mean")
        psi = np.where(missing, np.nanmean(psi) if (~missing).any() else 0.0, psi)
    meta["seconds"] = time.perf_counter() - t0
    return ValueVector(psi, "data_oob", meta)


def random_baseline(m: int, seed: int = 0) -> ValueVector:
    if m < 1:
        raise ValueError("m must be >= 1")
    return ValueVector(np.random.default_rng(seed).random(m), "random")
