import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mkfn.kernelspace import KernelBank, gram_rbf, rbf_width_heuristic

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_bank(rng, n, J, dim=2, factor=None):
    """RBF bank over J independent random point clouds."""
    mats = []
    for _ in range(J):
        X = rng.standard_normal((n, dim)) * rng.uniform(0.5, 2.0, size=dim)
        f = factor if factor is not None else rng.choice([0.25, 0.5, 1.0])
        mats.append(gram_rbf(X, rbf_width_heuristic(X, f)))
    return KernelBank(np.stack(mats))


def random_pd(rng, n, ridge=1e-3):
    A = rng.standard_normal((n, n))
    return A @ A.T / n + ridge * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """``acceptance(k, ok, detail)`` prints and records one verdict line."""

    def record(k, ok, detail=""):
        line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _ACCEPTANCE[k] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
