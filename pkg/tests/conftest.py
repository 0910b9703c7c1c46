import itertools
from math import factorial

import numpy as np
import pytest

from datavalue.dataset import split_by_count, synth_blobs


def brute_force_shapley(U, m):
    """Shapley values by the subset-weight formula |S|!(m-|S|-1)!/m! over all S."""
    cache = {}

    def u(S):
        if S not in cache:
            cache[S] = U(np.array(S, dtype=np.int64))
        return cache[S]

    phi = np.zeros(m)
    for i in range(m):
        others = [p for p in range(m) if p != i]
        for r in range(m):
            w = factorial(r) * factorial(m - r - 1) / factorial(m)
            for S in itertools.combinations(others, r):
                phi[i] += w * (u(tuple(sorted(S + (i,)))) - u(S))
    return phi


@pytest.fixture
def small_blobs():
    ds = synth_blobs(200, 3, 2, 2.0, seed=1)
    return ds, split_by_count(ds, 60, 40, 100, seed=1)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    """Record one human-readable PASS/FAIL line per acceptance criterion."""
    def record(number, ok, detail):
        ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        print(ACCEPTANCE_LINES[-1])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
