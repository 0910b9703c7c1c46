"""Truncated Monte Carlo estimation of per-cardinality marginal contributions."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConvergenceConfig:
    gr_threshold: float = 1.05
    min_permutations: int = 300
    max_permutations: int = 10000
    trunc_tol: float = 1e-8
    trunc_patience: int = 10
    n_chains: int = 10

    def __post_init__(self):
        if self.n_chains < 2:
            raise ValueError("n_chains must be >= 2")
        if not 0 <= self.min_permutations <= self.max_permutations:
            raise ValueError("need 0 <= min_permutations <= max_permutations")
        if self.max_permutations < self.n_chains:
            raise ValueError("max_permutations must allow at least one full round of chains")
        if self.min_permutations > self.max_permutations // self.n_chains * self.n_chains:
            raise ValueError("min_permutations is unreachable in whole rounds of n_chains")
        if self.gr_threshold <= 0 or self.trunc_tol <= 0 or self.trunc_patience <= 0:
            raise ValueError("thresholds must be > 0")


def scan_permutation(perm, U, cfg: ConvergenceConfig = ConvergenceConfig()):
    """Marginal samples along one permutation.

    Returns ``(samples, n_scanned)`` where ``samples[l - 1]`` is
    ``U(perm[:l]) - U(perm[:l - 1])`` for every scanned prefix length ``l``
    and ``0`` past the truncation point. Scanning stops once
    ``cfg.trunc_patience`` prefixes have a relative change
    ``|U(P_{l+1}) - U(P_l)| / U(P_l)`` at or below ``cfg.trunc_tol``;
    prefixes with ``U(P_l) == 0`` never count.
    """
    perm = np.asarray(perm, dtype=np.int64)
    m = len(perm)
    if not np.array_equal(np.sort(perm), np.arange(m)):
        raise ValueError("perm is not a permutation of 0..m-1")
    samples = np.zeros(m)
    prev = U(perm[:0])
    small = 0
    scanned = 0
    for l in range(1, m + 1):
        cur = U(perm[:l])
        samples[l - 1] = cur - prev
        scanned = l
        if l >= 2 and prev != 0 and abs(cur - prev) / abs(prev) <= cfg.trunc_tol:
            small += 1
            if small >= cfg.trunc_patience:
                break
        prev = cur
    return samples, scanned


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor, maximised over monitored quantities.

    ``chains`` has shape ``(n_chains, length)`` or ``(n_chains, length, p)``.
    Per quantity, with ``W`` the mean within-chain variance and ``B`` the
    chain length times the variance of the chain means,
    ``R = sqrt((l - 1) / l + B / (l * W))``. ``W = B = 0`` gives 1 and
    ``W = 0 < B`` gives ``inf``.
    """
    try:
        arr = np.asarray(chains, dtype=float)
    except ValueError:
        raise ValueError("chains must all have the same length") from None
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[0] < 2:
        raise ValueError("need at least two equal-length chains")
    l = arr.shape[1]
    if l < 2:
        raise ValueError("every chain needs length >= 2")
    W = arr.var(axis=1, ddof=1).mean(axis=0)
    B = l * arr.mean(axis=1).var(axis=0, ddof=1)
    tiny = 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt((l - 1) / l + B / (l * W))
    r = np.where(W > tiny, r, np.where(B > tiny, np.inf, 1.0))
    return float(np.max(r))


@dataclass
class MarginalAccumulator:
    """Running sums of marginal samples per (point, cardinality) plus chain history.

    ``sums[i, j]`` / ``counts[i, j]`` hold samples of point ``i`` entering a
    prefix of size ``j`` (cardinality ``j + 1``). ``chain_samples[c]`` has one
    row of per-point samples for each permutation drawn by chain ``c``.
    """

    m: int
    n_chains: int
    sums: np.ndarray = None
    counts: np.ndarray = None
    chain_samples: list = field(default_factory=list)
    permutations_used: int = 0
    gr_history: list = field(default_factory=list)
    converged: bool = False

    def __post_init__(self):
        if self.sums is None:
            self.sums = np.zeros((self.m, self.m))
            self.counts = np.zeros((self.m, self.m), dtype=np.int64)
            self.chain_samples = [[] for _ in range(self.n_chains)]

    def add(self, chain: int, perm: np.ndarray, samples: np.ndarray):
        by_point = np.empty(self.m)
        by_point[perm] = samples
        pos = np.arange(self.m)
        self.sums[perm, pos] += samples
        self.counts[perm, pos] += 1
        self.chain_samples[chain].append(by_point)
        self.permutations_used += 1

    def marginals(self) -> np.ndarray:
        """``(m, m)`` estimates of the per-cardinality marginals; NaN where unobserved."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.counts > 0, self.sums / np.maximum(self.counts, 1), np.nan)

    def point_means(self) -> np.ndarray:
        """Mean of all samples observed for each point."""
        total = self.counts.sum(axis=1)
        if np.any(total == 0):
            raise ValueError("some point has no marginal samples")
        return self.sums.sum(axis=1) / total

    def running_means(self) -> np.ndarray:
        """``(n_chains, l, m)`` running means of each chain's per-point samples."""
        arr = np.asarray([np.asarray(c) for c in self.chain_samples])
        steps = np.arange(1, arr.shape[1] + 1)[None, :, None]
        return np.cumsum(arr, axis=1) / steps


def _chain_rngs(seed: int, n_chains: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_chains)]


def run_tmc(U, m: int, cfg: ConvergenceConfig = ConvergenceConfig(), seed: int = 0,
            n_jobs: int = 1) -> MarginalAccumulator:
    """Truncated Monte Carlo over permutations of ``m`` training points.

    Each of ``cfg.n_chains`` chains owns an RNG stream derived from
    ``(seed, chain)`` and draws one permutation per round. After every round,
    once ``cfg.min_permutations`` have been used, sampling stops when the
    Gelman-Rubin statistic of the per-chain running means drops below
    ``cfg.gr_threshold``; it never exceeds ``cfg.max_permutations``.
    Results do not depend on ``n_jobs``.
    """
    if m < 1:
        raise ValueError("empty training split")
    acc = MarginalAccumulator(m, cfg.n_chains)
    rngs = _chain_rngs(seed, cfg.n_chains)

    def one(c, perm):
        return scan_permutation(perm, U, cfg)[0]

    pool = ThreadPoolExecutor(n_jobs) if n_jobs > 1 else None
    try:
        while acc.permutations_used + cfg.n_chains <= cfg.max_permutations:
            perms = [rng.permutation(m) for rng in rngs]
            if pool is None:
                results = [one(c, p) for c, p in enumerate(perms)]
            else:
                results = list(pool.map(one, range(cfg.n_chains), perms))
            for c, (perm, samples) in enumerate(zip(perms, results)):
                acc.add(c, perm, samples)
            if acc.permutations_used >= cfg.min_permutations and len(acc.chain_samples[0]) >= 2:
                r = gelman_rubin(acc.running_means())
                acc.gr_history.append(r)
                if r < cfg.gr_threshold:
                    acc.converged = True
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    logger.debug("tmc: %d permutations, converged=%s", acc.permutations_used, acc.converged)
    return acc
