"""Datasets, train/valid/test splits and synthetic noise injection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

Task = Literal["classification", "regression"]
NoiseKind = Literal["label_flip", "feature_gauss"]


class DatasetError(ValueError):
    """Raised for malformed dataset inputs or impossible split/noise requests."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus labels; the universe all data values refer to.

    Classification labels are integer class indices in ``[0, n_classes - 1]``.
    Arrays are copied and made read-only on construction.
    """

    features: np.ndarray
    labels: np.ndarray
    task: Task = "classification"
    n_classes: int = 0
    name: str = "dataset"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DatasetError(f"features must be a non-empty 2-D matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DatasetError("features contain non-finite entries")
        if self.task not in ("classification", "regression"):
            raise DatasetError(f"unknown task {self.task!r}")
        if self.task == "classification":
            y = np.asarray(self.labels)
            if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
                raise DatasetError("classification labels must be integers")
            y = y.astype(np.int64)
            if y.size and y.min() < 0:
                raise DatasetError("classification labels must be nonnegative")
            C = int(self.n_classes) if self.n_classes else int(y.max()) + 1
            if y.max() > C - 1:
                raise DatasetError(f"label {y.max()} outside [0, {C - 1}]")
            object.__setattr__(self, "n_classes", C)
        else:
            y = np.asarray(self.labels, dtype=float)
            object.__setattr__(self, "n_classes", 0)
        if y.shape != (X.shape[0],):
            raise DatasetError(f"labels shape {y.shape} does not match {X.shape[0]} rows")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def replace(self, features=None, labels=None) -> "Dataset":
        return Dataset(
            self.features if features is None else features,
            self.labels if labels is None else labels,
            self.task,
            self.n_classes,
            self.name,
        )


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "valid", "test"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=np.int64)))
        parts = [self.train, self.valid, self.test]
        joined = np.concatenate(parts)
        if len(np.unique(joined)) != len(joined):
            raise DatasetError("split index lists overlap or contain duplicates")
        if joined.size and joined.min() < 0:
            raise DatasetError("negative split index")


@dataclass(frozen=True)
class NoiseRecord:
    """Ground truth for the detection tasks: which train rows were corrupted."""

    kind: NoiseKind
    rate: float
    affected: frozenset = field(default_factory=frozenset)
    sigma: float = 0.0

    def mask(self, train: np.ndarray) -> np.ndarray:
        """Boolean mask aligned with ``train`` marking corrupted rows."""
        return np.isin(np.asarray(train), np.fromiter(self.affected, dtype=np.int64))


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, label_column: int = -1, task: Task = "classification",
             name: str | None = None) -> Dataset:
    """Read a numeric CSV file into a :class:`Dataset`.

    A single header row is skipped when any cell of the first row is
    non-numeric. Classification labels are re-indexed to ``0..C-1`` by the
    sorted order of the distinct raw values.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    if not rows:
        raise DatasetError(f"no data rows in {path}")
    width = len(rows[0])
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DatasetError(f"row {i + 1} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DatasetError(f"non-numeric cell {cell!r} at row {i + 1}, column {j + 1}") from None
    col = label_column % width if -width <= label_column < width else None
    if col is None or width < 2:
        raise DatasetError(f"label column {label_column} not present in {width}-column file")
    y_raw = values[:, col]
    X = np.delete(values, col, axis=1)
    if task == "classification":
        classes, y = np.unique(y_raw, return_inverse=True)
        return Dataset(X, y, task, len(classes), name or path.stem)
    return Dataset(X, y_raw, task, 0, name or path.stem)


def synth_blobs(n: int, d: int, C: int, sep: float, seed: int) -> Dataset:
    """Isotropic unit-variance Gaussian classes centred at ``sep * e_(c mod d)``."""
    if n < C or C < 1:
        raise DatasetError(f"need n >= C >= 1, got n={n}, C={C}")
    if d < 1 or sep <= 0:
        raise DatasetError("need d >= 1 and sep > 0")
    rng = np.random.default_rng(seed)
    y = rng.permutation(np.arange(n) % C)
    centers = np.zeros((C, d))
    centers[np.arange(C), np.arange(C) % d] = sep
    X = centers[y] + rng.standard_normal((n, d))
    return Dataset(X, y, "classification", C, f"blobs-{n}x{d}-c{C}")


def synth_friedman(n: int, seed: int) -> Dataset:
    """Friedman #1 score on 10 uniform features, dichotomised at its sample median."""
    if n < 2:
        raise DatasetError("synth_friedman needs n >= 2")
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, 10))
    s = (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
         + 10 * X[:, 3] + 5 * X[:, 4])
    # strict ">" against the median splits an even-sized sample exactly in half
    y = (s > np.median(s)).astype(np.int64)
    return Dataset(X, y, "classification", 2, f"friedman-{n}")


def split_by_count(ds: Dataset, n_train: int, n_valid: int, n_test: int, seed: int) -> SplitIndices:
    total = n_train + n_valid + n_test
    if min(n_train, n_valid, n_test) < 0 or total > ds.n:
        raise DatasetError(f"split sizes {n_train}+{n_valid}+{n_test} exceed n={ds.n}")
    perm = np.random.default_rng(seed).permutation(ds.n)[:total]
    return SplitIndices(perm[:n_train], perm[n_train:n_train + n_valid], perm[n_train + n_valid:])


def _n_affected(rate: float, n_train: int) -> int:
    if not 0.0 <= rate <= 1.0:
        raise DatasetError(f"noise rate must lie in [0, 1], got {rate}")
    return int(round(rate * n_train))  # round() is half-to-even


def inject_label_noise(ds: Dataset, split: SplitIndices, rate: float, seed: int):
    """Flip the labels of ``round(rate * |train|)`` random training points.

    Binary labels become ``1 - y``; multiclass labels move uniformly to one of
    the other ``C - 1`` classes. Returns ``(noisy_dataset, NoiseRecord)``.
    """
    if ds.task != "classification":
        raise DatasetError("label noise requires a classification dataset")
    if ds.n_classes < 2:
        raise DatasetError("label noise requires at least two classes")
    rng = np.random.default_rng(seed)
    k = _n_affected(rate, len(split.train))
    chosen = np.sort(rng.choice(split.train, size=k, replace=False))
    y = ds.labels.copy()
    shift = rng.integers(1, ds.n_classes, size=k)
    y[chosen] = (y[chosen] + shift) % ds.n_classes
    return ds.replace(labels=y), NoiseRecord("label_flip", rate, frozenset(chosen.tolist()))


def inject_feature_noise(ds: Dataset, split: SplitIndices, rate: float, sigma: float, seed: int):
    """Add i.i.d. ``N(0, sigma^2)`` noise to every feature of random training rows."""
    if sigma < 0:
        raise DatasetError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    k = _n_affected(rate, len(split.train))
    chosen = np.sort(rng.choice(split.train, size=k, replace=False))
    X = ds.features.copy()
    X[chosen] += sigma * rng.standard_normal((k, ds.d))
    record = NoiseRecord("feature_gauss", rate, frozenset(chosen.tolist()), sigma)
    return ds.replace(features=X), record
