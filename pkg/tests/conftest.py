import numpy as np
import pytest

from voterlab.model import InteractionMatrix, bit_table


@pytest.fixture
def rng():
    return np.random.default_rng(20241015)


def brute_phi(A, pi):
    """Phi_A by a plain python loop over partitions."""
    n = A.shape[0]
    best = np.inf
    for mask in range(1, (1 << n) - 1):
        x = np.array([(mask >> u) & 1 for u in range(n)], float)
        q = A @ x
        s = pi @ x
        best = min(best, float(np.sum(pi ** 2 * q * (1 - q)) / (s * (1 - s))))
    return best


def power_pi(A, iters=200000):
    """Stationary law by iterating the lazy chain, independent of the solver."""
    L = 0.5 * (np.eye(len(A)) + A)
    p = np.full(len(A), 1.0 / len(A))
    for _ in range(iters):
        q = p @ L
        if np.abs(q - p).max() < 1e-16:
            break
        p = q
    return p / p.sum()


def random_dense(n, rng):
    W = rng.random((n, n)) + 0.05
    return InteractionMatrix(W / W.sum(axis=1, keepdims=True))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, _ in mod.CRITERIA:
        if name in mod.RESULTS:
            terminalreporter.write_line(mod.RESULTS[name])
