import numpy as np
import pytest

from sparsegc.types import SampleSet


def random_symmetric(rng, n, scale=1.0):
    Z = rng.normal(scale=scale, size=(n, n))
    Z = (Z + Z.T) / 2
    np.fill_diagonal(Z, 0.0)
    return Z


def random_samples(rng, num_nodes, n, *, shift=0.0):
    """Balanced two-class sample set; class +1 shifted by ``shift`` on all edges."""
    E = num_nodes * (num_nodes - 1) // 2
    y = np.r_[-np.ones(n // 2), np.ones(n - n // 2)].astype(int)
    X = rng.normal(size=(n, E)) + shift * (y[:, None] > 0)
    return SampleSet.from_arrays(X, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_acceptance():
    """Record ``(criterion, passed, detail)``; printed once per criterion."""

    def record(criterion: int, passed: bool, detail: str) -> None:
        _ACCEPTANCE[criterion] = (bool(passed), detail)
        print(f"[criterion {criterion}] {'PASS' if passed else 'FAIL'}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 11):
        if k in _ACCEPTANCE:
            passed, detail = _ACCEPTANCE[k]
            terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {k:2d}: NOT RUN")
