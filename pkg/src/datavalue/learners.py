"""Small deterministic learners that utilities refit thousands of times.

All models are plain numpy; nothing here draws random numbers except the
bootstrap in :class:`BaggingModel`, which takes an explicit seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

LearnerKind = Literal["logistic", "tree", "knn", "constant", "bagging"]


def _row_lse(z: np.ndarray) -> np.ndarray:
    # row-wise log-sum-exp; scipy's version costs ~100us per call on tiny inputs,
    # which dominates logistic fits that run thousands of times
    top = z.max(axis=1, keepdims=True)
    return top + np.log(np.exp(z - top).sum(axis=1, keepdims=True))

_DEFAULTS = {
    "logistic": {"l2": 1e-4, "epochs": 200, "step": 0.1},
    "tree": {"max_depth": 6, "min_split": 2},
    "knn": {"k": 5},
    "constant": {},
    "bagging": {"B": 1000, "seed": 0, "max_depth": 6, "min_split": 2},
}


@dataclass(frozen=True)
class LearnerSpec:
    kind: LearnerKind = "logistic"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _DEFAULTS:
            raise ValueError(f"unknown learner kind {self.kind!r}")
        unknown = set(self.params) - set(_DEFAULTS[self.kind])
        if unknown:
            raise ValueError(f"unknown {self.kind} hyperparameter(s): {sorted(unknown)}")
        merged = {**_DEFAULTS[self.kind], **self.params}
        object.__setattr__(self, "params", merged)
        for key in ("k", "B", "max_depth", "epochs"):
            if key in merged and merged[key] < 1:
                raise ValueError(f"{key} must be >= 1")
        if merged.get("step", 1.0) <= 0:
            raise ValueError("step must be > 0")

    def __getitem__(self, key):
        return self.params[key]


def _check_X(X, d=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if d is not None and X.shape[1] != d:
        raise ValueError(f"expected {d} feature columns, got {X.shape[1]}")
    if np.isnan(X).any():
        raise ValueError("NaN in features")
    return X


class Model:
    """Common predict/scores surface for fitted models."""

    task = "classification"
    n_classes = 0
    d = 0

    def scores(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        s = self.scores(X)
        if self.task == "regression":
            return s
        return np.argmax(s, axis=1)  # first maximum -> smallest class index


class ConstantModel(Model):
    def __init__(self, value, task, n_classes, d):
        self.value, self.task, self.n_classes, self.d = value, task, n_classes, d

    def scores(self, X):
        X = _check_X(X, self.d)
        if self.task == "regression":
            return np.full(len(X), float(self.value))
        out = np.zeros((len(X), self.n_classes))
        out[:, int(self.value)] = 1.0
        return out


class LogisticModel(Model):
    """Multinomial logistic regression (or least squares for regression tasks).

    Trained by full-batch gradient descent from zero weights. An epoch whose
    proposed step would increase the penalised loss halves the step size and
    retries, so ``loss_history`` is non-increasing.
    """

    def __init__(self, W, b, task, n_classes, loss_history):
        self.W, self.b, self.task, self.n_classes = W, b, task, n_classes
        self.d = W.shape[0]
        self.loss_history = loss_history

    def scores(self, X):
        X = _check_X(X, self.d)
        z = X @ self.W + self.b
        if self.task == "regression":
            return z[:, 0]
        return np.exp(z - _row_lse(z))


def _fit_logistic(params, X, y, task, n_classes):
    n, d = X.shape
    l2, step = params["l2"], params["step"]
    if task == "regression":
        targets = y.reshape(-1, 1).astype(float)
    else:
        targets = np.zeros((n, n_classes))
        targets[np.arange(n), y] = 1.0
    width = targets.shape[1]
    W = np.zeros((d, width))
    b = np.zeros(width)

    def forward(W, b):
        z = X @ W + b
        if task == "regression":
            r = z - targets
            return 0.5 * np.mean(r ** 2) + 0.5 * l2 * np.sum(W * W), r
        lse = _row_lse(z)
        loss = np.mean(lse[:, 0] - np.sum(z * targets, axis=1)) + 0.5 * l2 * np.sum(W * W)
        return loss, np.exp(z - lse) - targets

    loss, resid = forward(W, b)
    history = [loss]
    for _ in range(params["epochs"]):
        gW = X.T @ resid / n + l2 * W
        gb = resid.mean(axis=0)
        for _halving in range(40):
            W_new, b_new = W - step * gW, b - step * gb
            new_loss, new_resid = forward(W_new, b_new)
            if new_loss <= loss:
                break
            step *= 0.5
        else:
            break
        W, b, loss, resid = W_new, b_new, new_loss, new_resid
        history.append(loss)
    return LogisticModel(W, b, task, n_classes, np.array(history))


class TreeModel(Model):
    """Binary CART tree stored as flat node arrays."""

    def __init__(self, feature, threshold, left, right, value, task, n_classes, d):
        self.feature, self.threshold = feature, threshold
        self.left, self.right, self.value = left, right, value
        self.task, self.n_classes, self.d = task, n_classes, d

    def apply(self, X) -> np.ndarray:
        X = _check_X(X, self.d)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def scores(self, X):
        return self.value[self.apply(X)]


def _best_split(X, T, w, variance, min_leaf_weight=1e-12):
    """Best (feature, threshold, gain) for weighted targets.

    ``T`` is an (n, q) target matrix: one-hot classes for Gini, or
    ``[y, y**2]`` for variance. Returns ``None`` when no split reduces impurity.
    """
    n, d = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    Xs = np.take_along_axis(X, order, axis=0)                     # (n, d)
    WT = (w[:, None] * T)[order]                                  # (n, d, q)
    ws = w[order]                                                 # (n, d)
    cw = np.cumsum(ws, axis=0)[:-1]                               # left weights
    cT = np.cumsum(WT, axis=0)[:-1]
    tot_w, tot_T = w.sum(), (w[:, None] * T).sum(axis=0)
    rw = tot_w - cw
    rT = tot_T - cT
    valid = (Xs[1:] > Xs[:-1]) & (cw > min_leaf_weight) & (rw > min_leaf_weight)
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        if variance:
            # weighted SSE = sum w y^2 - (sum w y)^2 / sum w
            child = (cT[..., 1] - cT[..., 0] ** 2 / cw) + (rT[..., 1] - rT[..., 0] ** 2 / rw)
            parent = tot_T[1] - tot_T[0] ** 2 / tot_w
        else:
            # weighted Gini = W - sum_c W_c^2 / W
            child = (cw - np.sum(cT ** 2, axis=2) / cw) + (rw - np.sum(rT ** 2, axis=2) / rw)
            parent = tot_w - np.sum(tot_T ** 2) / tot_w
    child = np.where(valid, child, np.inf)
    # column-major flat argmin: lowest feature first, then lowest threshold
    flat = int(np.argmin(child.T))
    j, pos = divmod(flat, n - 1)
    gain = parent - child[pos, j]
    if not gain > 1e-12 * max(1.0, abs(parent)):
        return None
    return j, 0.5 * (Xs[pos, j] + Xs[pos + 1, j]), gain


def _fit_tree(params, X, y, task, n_classes, weights=None):
    n, d = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    keep = w > 0
    X, y, w = X[keep], y[keep], w[keep]
    if task == "regression":
        T = np.column_stack([y, y * y]).astype(float)
    else:
        T = np.zeros((len(y), n_classes))
        T[np.arange(len(y)), y] = 1.0
    feature, threshold, left, right, value = [], [], [], [], []

    def leaf_value(rows):
        if task == "regression":
            return np.array(np.average(y[rows], weights=w[rows]))
        return np.bincount(y[rows], weights=w[rows], minlength=n_classes) / w[rows].sum()

    def grow(rows, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(leaf_value(rows))
        if depth >= params["max_depth"] or w[rows].sum() < params["min_split"]:
            return node
        if task == "classification" and np.count_nonzero(np.bincount(y[rows], minlength=n_classes)) < 2:
            return node
        split = _best_split(X[rows], T[rows], w[rows], task == "regression")
        if split is None:
            return node
        j, thr, _ = split
        go_left = X[rows, j] <= thr
        feature[node], threshold[node] = j, thr
        left[node] = grow(rows[go_left], depth + 1)
        right[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    vals = np.array(value) if task == "classification" else np.array(value, dtype=float)
    return TreeModel(np.array(feature), np.array(threshold), np.array(left), np.array(right),
                     vals, task, n_classes, d)


class KNNModel(Model):
    """Stores the training set; Euclidean distance, ties to the lower training index."""

    def __init__(self, X, y, k, task, n_classes):
        self.X, self.y, self.k = X, y, k
        self.task, self.n_classes, self.d = task, n_classes, X.shape[1]

    def neighbors(self, X) -> np.ndarray:
        X = _check_X(X, self.d)
        dist = np.sqrt(np.maximum(
            (X ** 2).sum(1)[:, None] - 2 * X @ self.X.T + (self.X ** 2).sum(1)[None, :], 0.0))
        k = min(self.k, len(self.y))
        return np.argsort(dist, axis=1, kind="stable")[:, :k]

    def scores(self, X):
        nb = self.y[self.neighbors(X)]
        if self.task == "regression":
            return nb.mean(axis=1)
        out = np.zeros((len(nb), self.n_classes))
        for c in range(self.n_classes):
            out[:, c] = np.mean(nb == c, axis=1)
        return out


class BaggingModel(Model):
    """Bootstrap ensemble of CART trees.

    ``oob_counts[b, j]`` is how many times training row ``j`` was drawn for
    tree ``b``; rows with a zero count are out-of-bag for that tree.
    """

    def __init__(self, trees, oob_counts, task, n_classes, d):
        self.trees, self.oob_counts = trees, oob_counts
        self.task, self.n_classes, self.d = task, n_classes, d

    def scores(self, X):
        return np.mean([t.scores(X) for t in self.trees], axis=0)


def _fit_bagging(params, X, y, task, n_classes):
    m = len(y)
    rng = np.random.default_rng(params["seed"])
    tree_params = {"max_depth": params["max_depth"], "min_split": params["min_split"]}
    counts = np.empty((params["B"], m), dtype=np.int64)
    trees = []
    for b in range(params["B"]):
        counts[b] = np.bincount(rng.integers(0, m, size=m), minlength=m)
        yb = y[counts[b] > 0]
        if task == "classification" and len(np.unique(yb)) < 2:
            trees.append(ConstantModel(yb[0], task, n_classes, X.shape[1]))
        else:
            trees.append(_fit_tree(tree_params, X, y, task, n_classes, weights=counts[b]))
    counts.setflags(write=False)
    return BaggingModel(trees, counts, task, n_classes, X.shape[1])


def fit(spec: LearnerSpec, X, y, task="classification", n_classes=None) -> Model:
    """Fit ``spec`` on ``(X, y)``.

    Empty input and single-class classification input yield a
    :class:`ConstantModel`. ``n_classes`` fixes the width of classification
    score matrices; it defaults to ``max(y) + 1``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {X.shape}")
    _check_X(X)
    y = np.asarray(y)
    if len(y) != len(X):
        raise ValueError(f"{len(X)} feature rows but {len(y)} labels")
    d = X.shape[1]
    if task == "classification":
        y = y.astype(np.int64)
        if n_classes is None:
            n_classes = int(y.max()) + 1 if len(y) else 1
        if len(y) == 0:
            return ConstantModel(0, task, n_classes, d)
        present = np.unique(y)
        if len(present) < 2 or spec.kind == "constant":
            counts = np.bincount(y, minlength=n_classes)
            return ConstantModel(int(np.argmax(counts)), task, n_classes, d)
    else:
        y = y.astype(float)
        n_classes = 0
        if len(y) == 0:
            return ConstantModel(0.0, task, n_classes, d)
        if spec.kind == "constant":
            return ConstantModel(float(y.mean()), task, n_classes, d)
    if spec.kind == "logistic":
        return _fit_logistic(spec.params, X, y, task, n_classes)
    if spec.kind == "tree":
        return _fit_tree(spec.params, X, y, task, n_classes)
    if spec.kind == "knn":
        return KNNModel(X.copy(), y.copy(), spec["k"], task, n_classes)
    return _fit_bagging(spec.params, X, y, task, n_classes)


def predict(model: Model, X) -> np.ndarray:
    return model.predict(X)
