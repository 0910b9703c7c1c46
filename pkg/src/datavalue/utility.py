"""Set functions ``U: 2^train -> R`` used by the valuators.

Subsets are given as positions into the training split (``0..m-1``), never
as raw dataset row ids.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .dataset import Dataset, SplitIndices
from .learners import LearnerSpec, fit

Metric = Literal["accuracy", "neg_mse", "knn_accuracy", "volume"]


@dataclass(frozen=True)
class UtilitySpec:
    metric: Metric = "accuracy"
    learner: LearnerSpec = field(default_factory=LearnerSpec)
    valid_features: np.ndarray | None = None
    valid_labels: np.ndarray | None = None
    k: int = 1

    def __post_init__(self):
        if self.metric not in ("accuracy", "neg_mse", "knn_accuracy", "volume"):
            raise ValueError(f"unknown utility metric {self.metric!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.metric != "volume":
            if self.valid_features is None or len(self.valid_features) < 1:
                raise ValueError(f"metric {self.metric!r} needs at least one validation point")

    @classmethod
    def on(cls, ds: Dataset, rows, metric: Metric = "accuracy", learner=None, k: int = 1):
        """Spec whose validation data are the rows ``rows`` of ``ds``."""
        rows = np.asarray(rows, dtype=np.int64)
        return cls(metric, learner or LearnerSpec(), ds.features[rows], ds.labels[rows], k)


def _best_constant(spec: UtilitySpec, task: str) -> float:
    yv = spec.valid_labels
    if task == "classification":
        return float(np.max(np.bincount(yv.astype(np.int64))) / len(yv))
    return -float(np.mean((yv - yv.mean()) ** 2))


def _check_subset(subset, m: int) -> np.ndarray:
    s = np.asarray(subset, dtype=np.int64).reshape(-1)
    if s.size and (s.min() < 0 or s.max() >= m):
        raise IndexError(f"subset index outside the training split [0, {m - 1}]")
    return s


def eval_utility(spec: UtilitySpec, subset, ds: Dataset, split: SplitIndices) -> float:
    """Validation accuracy (or negative MSE) of the learner refit on ``subset``.

    The empty subset scores the best constant predictor on the validation set.
    """
    X, y = ds.features[split.train], ds.labels[split.train]
    return _model_utility(spec, _check_subset(subset, len(y)), X, y, ds.task, ds.n_classes)


def _model_utility(spec, s, X, y, task, n_classes) -> float:
    if spec.metric == "knn_accuracy":
        return _knn_utility(spec, s, X, y, task)
    if spec.metric == "volume":
        return _volume(X[s])
    if s.size == 0:
        return _best_constant(spec, task)
    model = fit(spec.learner, X[s], y[s], task, n_classes or None)
    pred = model.predict(spec.valid_features)
    if spec.metric == "accuracy":
        return float(np.mean(pred == spec.valid_labels))
    return -float(np.mean((spec.valid_labels - pred) ** 2))


def _knn_utility(spec, s, X, y, task) -> float:
    if s.size == 0:
        return 0.0
    Xv, yv = spec.valid_features, spec.valid_labels
    dist = ((Xv[:, None, :] - X[s][None, :, :]) ** 2).sum(axis=2)
    # stable sort over ascending subset positions -> ties go to the lower index
    order = np.argsort(s, kind="stable")
    nearest = np.argsort(dist[:, order], axis=1, kind="stable")[:, :min(spec.k, s.size)]
    labels = y[s][order][nearest]
    if task == "classification":
        total = np.sum(labels == yv[:, None])
    else:
        total = -np.sum((yv[:, None] - labels) ** 2)
    return float(total / (len(yv) * spec.k))


def knn_utility(spec: UtilitySpec, subset, ds: Dataset, split: SplitIndices) -> float:
    """Average label agreement with the ``min(k, |S|)`` nearest subset members.

    Normalised by ``n_val * k`` even when fewer than ``k`` neighbours exist.
    """
    X, y = ds.features[split.train], ds.labels[split.train]
    return _knn_utility(spec, _check_subset(subset, len(y)), X, y, ds.task)


def _volume(XS: np.ndarray) -> float:
    if XS.shape[0] == 0:
        return 0.0
    eig = np.linalg.eigvalsh(XS.T @ XS)
    if np.any(eig < 1e-12 * max(1.0, eig[-1])):
        return 0.0
    return float(np.sqrt(np.prod(eig)))


def volume_utility(subset, ds: Dataset, split: SplitIndices) -> float:
    """``sqrt(det(sum_i x_i x_i^T))`` over the subset; labels are ignored."""
    X = ds.features[split.train]
    return _volume(X[_check_subset(subset, len(X))])


class SetUtility:
    """Callable, memoised ``U(S)`` bound to one training split.

    ``U(positions)`` evaluates the utility of the training rows at those
    positions. With ``cache`` (default: on for ``m <= 16``) results are
    memoised by subset, which makes small exhaustive games cheap.
    """

    def __init__(self, spec: UtilitySpec, ds: Dataset, split: SplitIndices, cache: bool | None = None):
        self.spec = spec
        self.task, self.n_classes = ds.task, ds.n_classes
        self.X = ds.features[split.train]
        self.y = ds.labels[split.train]
        self.m = len(self.y)
        self.calls = 0
        if cache is None:
            cache = self.m <= 16
        self._cache = {} if cache else None

    def __call__(self, subset) -> float:
        s = np.sort(_check_subset(subset, self.m))
        if self._cache is None:
            self.calls += 1
            return _model_utility(self.spec, s, self.X, self.y, self.task, self.n_classes)
        key = s.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            self.calls += 1
            hit = _model_utility(self.spec, s, self.X, self.y, self.task, self.n_classes)
            self._cache[key] = hit
        return hit


class FunctionUtility:
    """Wrap a plain Python set function of training positions, e.g. a planted game."""

    def __init__(self, fn, m: int):
        self.fn, self.m = fn, m
        self.calls = 0

    def __call__(self, subset) -> float:
        self.calls += 1
        return float(self.fn(np.sort(_check_subset(subset, self.m))))
