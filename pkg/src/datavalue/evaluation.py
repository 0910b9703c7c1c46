"""Downstream tasks that score a vector of data values."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, NoiseRecord, SplitIndices
from .utility import UtilitySpec, eval_utility


@dataclass(frozen=True)
class DetectionResult:
    low_cluster: frozenset
    f1: float
    cluster_means: tuple


@dataclass(frozen=True)
class CurveResult:
    grid: tuple          # ((k, perf), ...)
    summary: float
    direction: str

    @property
    def ks(self):
        return [k for k, _ in self.grid]

    @property
    def perfs(self):
        return [p for _, p in self.grid]


def _values(values) -> np.ndarray:
    return np.asarray(getattr(values, "values", values), dtype=float)


def two_means_split(values, seed: int = 0, max_iter: int = 100):
    """Split 1-D values into a low and a high cluster by 2-means.

    k-means++ seeding followed by Lloyd iterations until the assignment stops
    changing. Returns ``(low, high)`` as sorted index arrays; points equidistant
    from both centres go to the lower one.
    """
    v = _values(values)
    if v.size < 2:
        raise ValueError("need at least two values to dichotomise")
    if np.all(v == v[0]):
        raise ValueError("all values identical; no two-cluster split exists")
    rng = np.random.default_rng(seed)
    first = v[rng.integers(v.size)]
    d2 = (v - first) ** 2
    second = v[rng.choice(v.size, p=d2 / d2.sum())]
    centers = np.sort([first, second])
    assign = None
    for _ in range(max_iter):
        # ties (equal distance) -> cluster 0, the lower centre
        new = (np.abs(v - centers[1]) < np.abs(v - centers[0])).astype(int)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for c in (0, 1):
            if np.any(assign == c):
                centers[c] = v[assign == c].mean()
        order = np.argsort(centers)
        if order[0] == 1:
            centers = centers[order]
            assign = 1 - assign
    low, high = np.flatnonzero(assign == 0), np.flatnonzero(assign == 1)
    if v[low].mean() > v[high].mean():
        low, high = high, low
    return low, high


def detection_f1(low, truth) -> float:
    """``2 |low & truth| / (|low| + |truth|)``."""
    truth_set = set(truth.affected) if isinstance(truth, NoiseRecord) else set(truth)
    if not truth_set:
        raise ValueError("empty ground-truth set")
    low_set = set(np.asarray(list(low)).tolist())
    return 2 * len(low_set & truth_set) / (len(low_set) + len(truth_set))


def detect(values, truth: NoiseRecord, train: np.ndarray, seed: int = 0) -> DetectionResult:
    """2-means on values, low cluster mapped to dataset row ids, F1 against ``truth``."""
    v = _values(values)
    low, high = two_means_split(v, seed)
    low_rows = frozenset(np.asarray(train)[low].tolist())
    return DetectionResult(low_rows, detection_f1(low_rows, truth),
                           (float(v[low].mean()), float(v[high].mean())))


def _grid(m: int, step: int):
    if m < 10:
        raise ValueError("curves need at least 10 training points")
    K = int(np.floor(0.2 * m))
    if K < step:
        raise ValueError(f"K = floor(0.2 m) = {K} is smaller than the grid step {step}")
    return list(range(0, K + 1, step))


def descending_order(values) -> np.ndarray:
    """Positions sorted by value, largest first; ties keep the lower index first."""
    v = _values(values)
    return np.lexsort((np.arange(v.size), -v))


def removal_subsets(values, step: int = 5):
    order = descending_order(values)
    return {k: np.sort(order[k:]) for k in _grid(len(order), step)}


def addition_subsets(values, step: int = 5):
    order = descending_order(values)[::-1]
    return {k: np.sort(order[:k]) for k in _grid(len(order), step)}


def _curve(subsets, U_test, ds, split, direction) -> CurveResult:
    grid = tuple((k, float(eval_utility(U_test, s, ds, split))) for k, s in subsets.items())
    summary = float(np.mean([p for k, p in grid if k > 0]))
    return CurveResult(grid, summary, direction)


def point_removal_curve(values, U_test: UtilitySpec, ds: Dataset, split: SplitIndices,
                        step: int = 5) -> CurveResult:
    """Test performance after removing the ``k`` highest-valued points, ``k = 0, step, ..., K``.

    ``summary`` averages the grid points with ``k >= step``.
    """
    return _curve(removal_subsets(values, step), U_test, ds, split, "removal")


def point_addition_curve(values, U_test: UtilitySpec, ds: Dataset, split: SplitIndices,
                         step: int = 5) -> CurveResult:
    """Test performance after adding the ``k`` lowest-valued points to the empty set."""
    return _curve(addition_subsets(values, step), U_test, ds, split, "addition")


def measure_runtime(fn, *args, **kwargs):
    """Call ``fn`` and return ``(result, wall_seconds)`` from a monotonic clock."""
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
