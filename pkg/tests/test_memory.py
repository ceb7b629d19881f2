import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from memchan.core import (
    DensityMatrix, bell_state, kron_all, random_density_matrix, random_pure_state, random_unitary, tensor, von_neumann_entropy,
)
from memchan.errors import ResourceCapError
from memchan.memory import (
    MemoryChannel, apply_n, apply_n_purified, channel_choi, evolve_joint, memoryless_probe,
)
from memchan.zoo import (
    correlated_dephasing_cnot, correlated_dephasing_cphase, identity_channel, shift_channel,
)

from conftest import _perm_matrix, brute_unitary_channel, dm

seeds = st.integers(0, 2**32 - 1)


def factored_channel(U_qe, d, d_M, d_E, mem0):
    """U = U_QE (x) I_M, reordered to the (Q, M, E) convention."""
    P = _perm_matrix([d, d_M, d_E], [0, 2, 1])  # (Q, M, E) -> (Q, E, M)
    U = P.T @ np.kron(U_qe, np.eye(d_M)) @ P
    return MemoryChannel(d, d_M, d_E, U, mem0)


def memoryless_product(U_qe, d, d_E, rho, n):
    """Oracle: sum over environment strings of (K_e1 x ... x K_en) rho (...)^dagger."""
    K = [U_qe[e::d_E, ::d_E] for e in range(d_E)]
    out = np.zeros_like(rho)
    for es in itertools.product(range(d_E), repeat=n):
        A = kron_all([K[e] for e in es])
        out = out + A @ rho @ A.conj().T
    return out


def random_channel(rng, d=2, d_M=2, d_E=2, mem_rank=None):
    U = random_unitary(d * d_M * d_E, rng)
    return MemoryChannel(d, d_M, d_E, U, random_density_matrix(d_M, rng, rank=mem_rank))


def test_rejects_bad_unitary():
    with pytest.raises(ValueError):
        MemoryChannel(2, 2, 1, np.eye(4) * 1.1, DensityMatrix.maximally_mixed([2]))
    with pytest.raises(ValueError):
        MemoryChannel(2, 2, 1, np.eye(3), DensityMatrix.maximally_mixed([2]))
    with pytest.raises(ValueError):
        MemoryChannel(2, 2, 1, np.eye(4), DensityMatrix.maximally_mixed([3]))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_factored_unitary_is_memoryless_product(n, rng):
    d, d_M, d_E = 2, 2, 3
    U_qe = random_unitary(d * d_E, rng)
    ch = factored_channel(U_qe, d, d_M, d_E, random_density_matrix(d_M, rng))
    rho = random_density_matrix(d ** n, rng, dims=[d] * n)
    out = apply_n(ch, rho, n).rho_Q.mat
    assert np.abs(out - memoryless_product(U_qe, d, d_E, rho.mat, n)).max() < 1e-10


@pytest.mark.parametrize("n", [1, 2, 3])
def test_perfect_memory_matches_brute_force(n, rng):
    ch = random_channel(rng, d_E=1)
    rho = random_density_matrix(2 ** n, rng, dims=[2] * n)
    ref = brute_unitary_channel(ch.U, rho.mat, ch.mem0.mat, 2, 2, n)
    assert np.abs(apply_n(ch, rho, n).rho_Q.mat - ref).max() < 1e-12


def test_perfect_memory_env_entropy_zero(rng):
    ch = random_channel(rng, d_E=1, mem_rank=1)
    out = apply_n(ch, random_density_matrix(4, rng, dims=[2, 2]), 2, keep_env=True)
    assert abs(von_neumann_entropy(out.rho_E)) < 1e-12


def test_dephasing_keeps_00():
    rho = DensityMatrix(dm([1, 0, 0, 0]), [2, 2])
    for ch in (correlated_dephasing_cphase(), correlated_dephasing_cnot()):
        assert np.abs(apply_n(ch, rho, 2).rho_Q.mat - rho.mat).max() < 1e-14


def test_identity_channel_unchanged(rng):
    rho = random_density_matrix(4, rng, dims=[2, 2])
    assert np.abs(apply_n(identity_channel(), rho, 2).rho_Q.mat - rho.mat).max() < 1e-14


def test_bell_through_one_dephasing_use():
    # hand computation: rho'_QR = (|Phi+><Phi+| + |Phi-><Phi-|) / 2
    psi = bell_state()
    out = apply_n_purified(correlated_dephasing_cphase(), psi, 1)
    F = np.vdot(psi.vec, out.rho_QR.mat @ psi.vec).real
    assert abs(F - 0.5) < 1e-12


def test_maximally_entangled_perfect_memory_bookkeeping(rng):
    # global state on Q R M is pure, so S(QR) = S(M)
    ch = random_channel(rng, d_E=1, mem_rank=1)
    out = apply_n_purified(ch, bell_state(), 1)
    assert abs(von_neumann_entropy(out.rho_QR) - von_neumann_entropy(out.rho_M)) < 1e-9


@given(seeds, st.integers(1, 2))
def test_global_purity(seed, n):
    rng = np.random.default_rng(seed)
    ch = random_channel(rng, mem_rank=1)
    psi = random_pure_state(2 ** n * 2, rng, [2] * n + [2])
    out = apply_n_purified(ch, psi, n, keep_env=True)
    assert abs(von_neumann_entropy(out.rho_MQR) - von_neumann_entropy(out.rho_E)) < 1e-9


@given(seeds)
def test_global_purity_mixed_memory(seed):
    rng = np.random.default_rng(seed)
    ch = random_channel(rng)
    psi = random_pure_state(8, rng, [2, 2, 2])
    out = apply_n_purified(ch, psi, 2, keep_env=True)
    assert abs(von_neumann_entropy(out.rho_MQR) - von_neumann_entropy(out.rho_E)) < 1e-9


@given(seeds, st.integers(1, 2), st.integers(1, 2))
def test_composition(seed, a, b):
    rng = np.random.default_rng(seed)
    ch = random_channel(rng)
    n = a + b
    rho = random_density_matrix(2 ** n, rng, dims=[2] * n)
    full = apply_n(ch, rho, n)
    qm = DensityMatrix(np.kron(rho.mat, ch.mem0.mat), [2] * n + [2])
    mid = evolve_joint(ch, qm, range(a))
    end = evolve_joint(ch, mid, range(a, n), first_use=False)
    assert np.abs(end.mat - full.rho_QM.mat).max() < 1e-10


@given(seeds, st.integers(1, 3))
def test_marginals_are_states(seed, n):
    rng = np.random.default_rng(seed)
    ch = random_channel(rng)
    out = apply_n(ch, random_density_matrix(2 ** n, rng, dims=[2] * n), n, keep_env=True)
    for rho in (out.rho_Q, out.rho_QM, out.rho_M, out.rho_E):
        assert abs(np.trace(rho.mat) - 1) < 1e-10
        assert np.linalg.eigvalsh(rho.mat).min() > -1e-10


@given(seeds)
def test_perfect_memory_is_unitary_on_qm(seed):
    rng = np.random.default_rng(seed)
    ch = random_channel(rng, d_E=1)
    rho = random_density_matrix(4, rng, dims=[2, 2])
    out = apply_n(ch, rho, 2)
    before = von_neumann_entropy(tensor(rho, ch.mem0))
    assert abs(von_neumann_entropy(out.rho_QM) - before) < 1e-9


def test_keep_env_agrees_with_density_route(rng):
    ch = random_channel(rng)
    rho = random_density_matrix(4, rng, dims=[2, 2])
    a = apply_n(ch, rho, 2)
    b = apply_n(ch, rho, 2, keep_env=True)
    assert np.abs(a.rho_QM.mat - b.rho_QM.mat).max() < 1e-12


def test_choi_reproduces_channel(rng):
    ch = random_channel(rng)
    rho = random_density_matrix(4, rng, dims=[2, 2])
    J = channel_choi(ch, 2)
    out = np.einsum("ab,abij->ij", rho.mat, J)
    assert np.abs(out - apply_n(ch, rho, 2).rho_Q.mat).max() < 1e-12


def test_memoryless_probe_examples(rng):
    U_qe = random_unitary(4, rng)
    assert memoryless_probe(factored_channel(U_qe, 2, 2, 2, DensityMatrix.maximally_mixed([2])))
    assert not memoryless_probe(correlated_dephasing_cphase())
    assert not memoryless_probe(shift_channel())


def test_dephasing_depends_on_memory_diagonal():
    # memory |1> applies Z to the signal, memory |0> leaves it alone
    ch = correlated_dephasing_cphase()
    plus = DensityMatrix(dm([1, 1]))
    outs = [apply_n(ch.with_memory(DensityMatrix.basis(k, 2)), plus, 1).rho_Q.mat for k in (0, 1)]
    assert np.abs(outs[0] - outs[1]).max() > 0.99


def test_cap_is_enforced():
    ch = correlated_dephasing_cphase()
    with pytest.raises(ResourceCapError):
        apply_n(ch, DensityMatrix.basis(0, [2] * 15), 15)
