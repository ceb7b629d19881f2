import sys
import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def dm(vec):
    """|v><v| for a (not necessarily normalised) amplitude list."""
    v = np.asarray(vec, dtype=complex)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def brute_unitary_channel(U, rho, mem, d, d_M, n):
    """Reference n-use channel: embed U on (Q_i, M) with explicit kron/permutation, trace M.

    Only for perfect-memory channels (d_E = 1); used as an oracle independent
    of the tensor-network code in the package.
    """
    D = d ** n
    state = np.kron(rho, mem)
    for i in range(n):
        # swap Q_i next to M: ordering Q_1..Q_n M -> bring Q_i to just before M
        perm = [j for j in range(n) if j != i] + [i, n]
        P = _perm_matrix([d] * n + [d_M], perm)
        big = P.T @ np.kron(np.eye(D // d), U) @ P
        state = big @ state @ big.conj().T
    return state.reshape(D, d_M, D, d_M).trace(axis1=1, axis2=3)


def _perm_matrix(dims, perm):
    """P with P |x_0..x_k> = |x_perm[0]..x_perm[k]>."""
    total = int(np.prod(dims))
    P = np.zeros((total, total))
    for idx in range(total):
        digits = np.unravel_index(idx, dims)
        new = np.ravel_multi_index([digits[p] for p in perm], [dims[p] for p in perm])
        P[new, idx] = 1
    return P


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
