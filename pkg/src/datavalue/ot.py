"""Entropic optimal transport between the training and validation measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dataset import Dataset, SplitIndices


DEFAULT_LABEL_FRACTION = 0.2


@dataclass(frozen=True)
class OTProblem:
    cost: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    epsilon: float
    max_iters: int = 5000
    tol: float = 1e-6

    def __post_init__(self):
        C = np.asarray(self.cost, dtype=float)
        if C.ndim != 2 or not np.all(np.isfinite(C)) or np.any(C < 0):
            raise ValueError("cost must be a finite nonnegative matrix")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        mu, nu = np.asarray(self.mu, float), np.asarray(self.nu, float)
        if mu.shape != (C.shape[0],) or nu.shape != (C.shape[1],):
            raise ValueError("marginal weights do not match the cost shape")
        if abs(mu.sum() - 1) > 1e-9 or abs(nu.sum() - 1) > 1e-9:
            raise ValueError("marginal weights must each sum to 1")
        object.__setattr__(self, "cost", C)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)

    @classmethod
    def uniform(cls, cost, epsilon=None, **kw):
        """Uniform marginals; ``epsilon`` defaults to ``0.01 * mean(cost)``."""
        cost = np.asarray(cost, dtype=float)
        m, n = cost.shape
        if epsilon is None:
            epsilon = 0.01 * cost.mean() if cost.mean() > 0 else 0.01
        return cls(cost, np.full(m, 1 / m), np.full(n, 1 / n), epsilon, **kw)


@dataclass(frozen=True)
class DualPotentials:
    h: np.ndarray
    g: np.ndarray
    marginal_err: float
    converged: bool
    iterations: int


def ground_cost(ds: Dataset, split: SplitIndices, label_weight: float | None = None) -> np.ndarray:
    """Euclidean feature distance plus ``label_weight`` for mismatched labels.

    ``label_weight`` defaults to ``DEFAULT_LABEL_FRACTION`` times the mean
    train-to-validation feature distance. Much larger penalties let any class
    proportion mismatch between the two sets shift whole classes of
    potentials.
    """
    Xt, Xv = ds.features[split.train], ds.features[split.valid]
    sq = (Xt ** 2).sum(1)[:, None] - 2 * Xt @ Xv.T + (Xv ** 2).sum(1)[None, :]
    dist = np.sqrt(np.maximum(sq, 0.0))
    if label_weight is None:
        label_weight = DEFAULT_LABEL_FRACTION * float(dist.mean())
    if label_weight < 0:
        raise ValueError("label_weight must be >= 0")
    mismatch = ds.labels[split.train][:, None] != ds.labels[split.valid][None, :]
    return dist + label_weight * mismatch


def sinkhorn_duals(p: OTProblem) -> DualPotentials:
    """Log-domain Sinkhorn iterations for the entropic dual potentials.

    Alternates ``f <- eps log mu - eps LSE((g - C) / eps)`` and the mirror
    update for ``g``, stopping when both marginals of the implied plan are
    within ``tol`` (sup norm). Returns the best iterate seen, with ``h``
    shifted to mean zero and ``g`` shifted oppositely.
    """
    C, eps = p.cost, p.epsilon
    log_mu, log_nu = np.log(p.mu), np.log(p.nu)
    f = np.zeros(C.shape[0])
    g = eps * (log_nu - logsumexp(-C / eps, axis=0))
    best = (np.inf, f, g)
    it = 0
    for it in range(1, p.max_iters + 1):
        row_lse = logsumexp((g[None, :] - C) / eps, axis=1)
        # columns are exact after each g-update, so the row gap is the error
        err = np.abs(np.exp(f / eps + row_lse) - p.mu).max()
        if err < best[0]:
            best = (err, f, g)
        if err < p.tol:
            break
        f = eps * (log_mu - row_lse)
        g = eps * (log_nu - logsumexp((f[:, None] - C) / eps, axis=0))
    _, f, g = best
    err = _marginal_error(C, eps, f, g, p.mu, p.nu)
    shift = f.mean()
    return DualPotentials(f - shift, g + shift, err, bool(err < p.tol), it)


def _marginal_error(C, eps, f, g, mu, nu) -> float:
    log_plan = (f[:, None] + g[None, :] - C) / eps
    return float(max(np.abs(np.exp(logsumexp(log_plan, axis=1)) - mu).max(),
                     np.abs(np.exp(logsumexp(log_plan, axis=0)) - nu).max()))
