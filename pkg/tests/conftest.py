import time

import numpy as np
import pytest

from ple_lab import SeededRng


@pytest.fixture
def rng():
    return SeededRng(20240601, 1)


def within_se(value, target, se, k=4.0):
    return abs(value - target) < k * se


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


_CELLS = {}
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def grid_cell():
    """Lazily computed, session-cached benchmark cells at the default settings.

    ``get(w1, n)`` returns the cell; ``get.seconds(w1, n)`` the time its first
    computation took.
    """
    from ple_lab import GridSpec, run_grid

    def compute(w1, n, method):
        key = (w1, n, method)
        if key not in _CELLS:
            t0 = time.perf_counter()
            cell = run_grid(GridSpec(weights=(w1,), sizes=(n,)), method).cells[0]
            _CELLS[key] = (cell, time.perf_counter() - t0)
        return _CELLS[key]

    def get(w1, n, method="hypernet"):
        return compute(w1, n, method)[0]

    get.seconds = lambda w1, n, method="hypernet": compute(w1, n, method)[1]
    return get


@pytest.fixture
def report():
    """Record one acceptance line; returns whether the criterion passed."""

    def record(number, title, ok, detail, seconds, limit):
        ok = bool(ok) and seconds < limit
        ACCEPTANCE_LINES.append(
            f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail} ({seconds:.1f} s, limit {limit:g} s)"
        )
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
