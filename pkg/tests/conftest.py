import numpy as np
import pytest

from ipmins.problem import Iterate, QuadraticProgram


def random_qp(rng, n=4, m=1, psd=True):
    """Convex QP with a strictly feasible point ``x = e``."""
    B = rng.standard_normal((n, n))
    Q = B @ B.T / n + (0.1 * np.eye(n) if psd else 0.0)
    A = rng.standard_normal((m, n))
    b = A @ np.ones(n)
    c = rng.standard_normal(n)
    return QuadraticProgram(Q, A, b, c, name=f"random-n{n}-m{m}")


def random_iterate(rng, prog, feasible=False):
    n, m = prog.n, prog.m
    x = np.ones(n) if feasible else rng.uniform(0.5, 2.0, n)
    return Iterate(x, rng.standard_normal(m), rng.uniform(0.5, 2.0, n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance verdict lines collected by ``test_acceptance``."""
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
