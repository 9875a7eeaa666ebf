import numpy as np
import pytest

from memkernel.algebra import GkslSpec, SuperOp, gksl_generator

ACCEPTANCE_LINES = []


def random_operator(rng, d):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def random_hermitian(rng, d):
    a = random_operator(rng, d)
    return 0.5 * (a + a.conj().T)


def random_channel(rng, d, rank=3):
    """Random CP unital map a -> sum_k v_k^dag a v_k with sum_k v_k^dag v_k = 1."""
    x = rng.normal(size=(rank * d, d)) + 1j * rng.normal(size=(rank * d, d))
    q, _ = np.linalg.qr(x)
    return SuperOp.kraus([q[k * d:(k + 1) * d] for k in range(rank)])


def random_cp(rng, d, rank=3):
    return SuperOp.kraus([random_operator(rng, d) for _ in range(rank)])


def random_gksl(rng, d, n_jumps=2):
    jumps = [(random_operator(rng, d), rng.uniform(0.1, 1.0)) for _ in range(n_jumps)]
    return gksl_generator(GkslSpec(random_hermitian(rng, d), jumps))


def random_diagonal_gksl(rng, d):
    """Random generator whose superoperator is diagonal (all such generators commute)."""
    H = np.diag(rng.normal(size=d))
    V = np.diag(rng.normal(size=d) + 1j * rng.normal(size=d))
    return gksl_generator(GkslSpec(H, ((V, rng.uniform(0.2, 1.5)),)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
