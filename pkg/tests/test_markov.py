import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from memchan.core import (
    PAULIS, I2, Z, DensityMatrix, bell_state, kron_all, random_density_matrix,
    random_unitary, tensor_all,
)
from memchan.errors import ResourceCapError
from memchan.markov import (
    MarkovNoiseSpec, build_unitary_model, convergence_fit, equivalence_check, is_regular,
    markov_channel_direct, memory_diagonal_step, memory_diagonal_trajectory,
    n_block_approximation_error, steady_memory_channel, steady_state, validate_gamma,
    verify_appendix_A1, verify_appendix_A2,
)
from memchan.memory import apply_n
from memchan.zoo import (
    MPParams, correlated_dephasing_cphase, correlated_dephasing_spec, mp_channel,
    pauli_channel_kraus,
)

from conftest import dm

seeds = st.integers(0, 2**32 - 1)


def random_unitary_spec(rng, d=2, m=3):
    ops = tuple(random_unitary(d, rng) for _ in range(m))
    gamma = rng.dirichlet(np.ones(m), size=m).T
    return MarkovNoiseSpec(ops, gamma, rng.dirichlet(np.ones(m)))


def pauli_product_channel(p, rho, n):
    """Oracle: independent Pauli channel on each of n uses, by explicit Kraus strings."""
    K = pauli_channel_kraus(p)
    out = np.zeros_like(rho)
    for ks in itertools.product(K, repeat=n):
        A = kron_all(ks)
        out = out + A @ rho @ A.conj().T
    return out


# -- validation -------------------------------------------------------------

def test_gamma_validation_names_column():
    with pytest.raises(ValueError, match="column 0"):
        validate_gamma([[0.9, 0.5], [0.0, 0.5]])
    with pytest.raises(ValueError):
        validate_gamma([[1.2, 0.5], [-0.2, 0.5]])


def test_spec_rejects_non_trace_preserving_family():
    with pytest.raises(ValueError):
        MarkovNoiseSpec((I2, 0.5 * Z), np.eye(2), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        MarkovNoiseSpec((I2, Z), np.eye(3), np.array([0.5, 0.5]))


# -- steady state -----------------------------------------------------------

def test_steady_state_two_state_chain():
    # fixed point of [[0.9, 0.5], [0.1, 0.5]]: 0.1 x = 0.5 (1 - x) -> x = 5/6
    ss = steady_state([[0.9, 0.5], [0.1, 0.5]])
    assert ss.regular
    assert np.abs(ss.distribution - [5 / 6, 1 / 6]).max() < 1e-12


@pytest.mark.parametrize("mu", [0.0, 0.3, 0.5, 0.9, 0.99])
def test_mp_uniform_steady_state(mu):
    ss = steady_state(mp_channel(MPParams(mu)).gamma)
    assert ss.regular
    assert np.abs(ss.distribution - 0.25).max() < 1e-12


def test_identity_gamma_is_not_regular():
    p0 = np.array([0.3, 0.7])
    with pytest.warns(UserWarning):
        ss = steady_state(np.eye(2), p0)
    assert not ss.regular
    assert np.abs(ss.distribution - p0).max() == 0
    assert not is_regular(np.eye(2))
    assert is_regular([[0, 0.5], [1, 0.5]])


def test_convergence_fit():
    g = np.array([[0.9, 0.5], [0.1, 0.5]])
    C, lam2, resid = convergence_fit(g, [0.0, 1.0])
    # two-state chain: error is exactly C * 0.4^k
    assert abs(lam2 - 0.4) < 1e-12
    # starting from (0, 1): ||x_k - p||_1 = 2 (5/6) 0.4^k
    assert abs(C - 5 / 3) < 1e-6
    assert resid < 1e-4


# -- direct evaluation ------------------------------------------------------

def test_direct_single_use_dephasing():
    plus = DensityMatrix(dm([1, 1]))
    out = markov_channel_direct(correlated_dephasing_spec(), plus, 1)
    assert np.abs(out.mat - np.eye(2) / 2).max() < 1e-15


def test_direct_dephasing_keeps_bell():
    bell = bell_state().density()
    out = markov_channel_direct(correlated_dephasing_spec(), bell, 2)
    assert np.abs(out.mat - bell.mat).max() < 1e-15


@pytest.mark.parametrize("n", [1, 2, 3])
def test_direct_mp_zero_is_product(n, rng):
    p = (0.4, 0.3, 0.2, 0.1)
    spec = mp_channel(MPParams(0.0, p))
    rho = random_density_matrix(2 ** n, rng, dims=[2] * n)
    out = markov_channel_direct(spec, rho, n).mat
    assert np.abs(out - pauli_product_channel(p, rho.mat, n)).max() < 1e-12


def test_direct_first_error_uses_p0():
    # gamma = I freezes the first error, so the output is a p0-weighted mixture of Z^(x)n
    spec = MarkovNoiseSpec((I2, Z), np.eye(2), np.array([0.8, 0.2]))
    psi = np.ones(4) / 2
    rho = np.outer(psi, psi)
    ZZ = np.kron(Z, Z)
    expect = 0.8 * rho + 0.2 * ZZ @ rho @ ZZ
    assert np.abs(markov_channel_direct(spec, DensityMatrix(rho, [2, 2]), 2).mat - expect).max() < 1e-15


def test_direct_term_cap():
    spec = mp_channel(MPParams(0.5))
    with pytest.raises(ResourceCapError):
        markov_channel_direct(spec, DensityMatrix.basis(0, [2] * 4), 4, max_terms=100)


@given(seeds, st.integers(1, 3))
def test_direct_is_cptp(seed, n):
    rng = np.random.default_rng(seed)
    spec = random_unitary_spec(rng)
    out = markov_channel_direct(spec, random_density_matrix(2 ** n, rng, dims=[2] * n), n)
    assert abs(np.trace(out.mat) - 1) < 1e-10
    assert np.linalg.eigvalsh(out.mat).min() > -1e-10


@given(seeds, st.integers(1, 3))
def test_unitary_family_is_unital(seed, n):
    spec = random_unitary_spec(np.random.default_rng(seed))
    mixed = DensityMatrix.maximally_mixed([2] * n)
    out = markov_channel_direct(spec, mixed, n)
    assert np.abs(out.mat - mixed.mat).max() < 1e-10


# -- unitary model ----------------------------------------------------------

@given(seeds)
def test_unitary_model_is_unitary(seed):
    ch = build_unitary_model(random_unitary_spec(np.random.default_rng(seed)))
    assert np.abs(ch.U.conj().T @ ch.U - np.eye(ch.U.shape[0])).max() < 1e-10


@pytest.mark.parametrize("n", [1, 2, 3])
def test_dephasing_model_matches_cphase(n, rng):
    a = build_unitary_model(correlated_dephasing_spec())
    b = correlated_dephasing_cphase()
    rho = random_density_matrix(2 ** n, rng, dims=[2] * n)
    assert np.abs(apply_n(a, rho, n).rho_Q.mat - apply_n(b, rho, n).rho_Q.mat).max() < 1e-10


def test_stationary_p0_gives_steady_memory():
    spec = mp_channel(MPParams(0.5))
    ch = build_unitary_model(spec)
    assert not ch.flags
    assert np.abs(np.diag(ch.mem0.mat).real - 0.25).max() < 1e-12


def test_singular_gamma_fallback():
    spec = MarkovNoiseSpec((I2, Z), np.full((2, 2), 0.5), np.array([0.5, 0.5]))
    ch = build_unitary_model(spec)
    assert "fallback:singular-gamma" in ch.flags
    assert ch.first_use_override is not None


def test_invalid_alpha_fallback():
    # gamma^-1 p0 leaves the simplex for a p0 far from the chain's range
    g = np.array([[0.6, 0.4], [0.4, 0.6]])
    spec = MarkovNoiseSpec((I2, Z), g, np.array([1.0, 0.0]))
    ch = build_unitary_model(spec)
    assert "fallback:invalid-alpha" in ch.flags
    assert equivalence_check(spec, 2, trials=10) < 1e-12


@pytest.mark.parametrize("spec,n", [
    (correlated_dephasing_spec(), 3),
    (mp_channel(MPParams(0.5)), 2),
    (mp_channel(MPParams(0.0)), 2),
    (mp_channel(MPParams(0.7, (0.5, 0.2, 0.2, 0.1))), 3),
])
def test_equivalence_examples(spec, n):
    assert equivalence_check(spec, n, trials=20) <= 1e-10


@given(seeds)
def test_equivalence_random_specs(seed):
    rng = np.random.default_rng(seed)
    spec = random_unitary_spec(rng)
    assert equivalence_check(spec, 2, trials=4, seed=seed) <= 1e-9


def test_equivalence_detects_tampering():
    spec = mp_channel(MPParams(0.5, (0.7, 0.1, 0.1, 0.1)))

    def transposed(s, rho, n):
        fake = object.__new__(MarkovNoiseSpec)
        object.__setattr__(fake, "kraus", s.kraus)
        object.__setattr__(fake, "gamma", s.gamma.T.copy())
        object.__setattr__(fake, "p0", s.p0)
        return markov_channel_direct(fake, rho, n)

    with pytest.raises(ValueError):
        equivalence_check(spec, 2, trials=5, direct=transposed)


# -- n-block approximation --------------------------------------------------

def test_n_block_exact_at_steady_state():
    spec = mp_channel(MPParams(0.5))
    assert n_block_approximation_error(spec, 1, 1) < 1e-12
    assert n_block_approximation_error(spec, 2, 2) < 1e-12


def test_n_block_dephasing_never_segments():
    plus = DensityMatrix(dm([1, 1]))
    err = n_block_approximation_error(correlated_dephasing_spec(), 1, 2, inputs=[[plus, plus]])
    # |++> becomes (|++><++| + |--><--|)/2 jointly but I/4 when segmented
    assert abs(err - 0.5) < 1e-12


def test_n_block_needs_divisor():
    with pytest.raises(ValueError):
        n_block_approximation_error(correlated_dephasing_spec(), 2, 3)


def test_steady_memory_channel_has_no_override():
    ch = steady_memory_channel(mp_channel(MPParams(0.0)))
    assert ch.first_use_override is None


# -- memory diagonal --------------------------------------------------------

def test_memory_diagonal_step_examples():
    spec = mp_channel(MPParams(0.5))
    # 0.5 * 0.25 + 0.5 * delta
    assert np.abs(memory_diagonal_step(spec, [1, 0, 0, 0]) - [0.625, 0.125, 0.125, 0.125]).max() < 1e-15
    assert np.abs(memory_diagonal_step(spec, [0.25] * 4) - 0.25).max() < 1e-15
    deph = correlated_dephasing_spec()
    assert np.abs(memory_diagonal_step(deph, [1, 0]) - [1, 0]).max() == 0


def test_memory_diagonal_matches_simulation():
    spec = mp_channel(MPParams(0.5))
    ch = build_unitary_model(spec).with_memory(DensityMatrix.basis(0, 4))
    traj = memory_diagonal_trajectory(ch, DensityMatrix(dm([1, 1])), 1)
    assert np.abs(traj[1] - [0.625, 0.125, 0.125, 0.125]).max() < 1e-12


def test_memory_diagonal_step_needs_unitary_family():
    s = np.sqrt(2)
    spec = MarkovNoiseSpec((s * np.diag([1, 0.8]), s * np.array([[0, 0.6], [0, 0]])),
                           np.full((2, 2), 0.5), np.array([0.5, 0.5]))
    assert not spec.unitary_kraus
    with pytest.raises(ValueError):
        memory_diagonal_step(spec, [0.5, 0.5])


def test_appendix_A1_examples():
    spec = mp_channel(MPParams(0.5))
    ch = build_unitary_model(spec)
    rho = random_density_matrix(2, np.random.default_rng(3))
    base = np.eye(2) / 2
    outs = []
    for mem in (base, base + 0.3 * np.array([[0, 1], [1, 0]])):
        deph = build_unitary_model(correlated_dephasing_spec()).with_memory(DensityMatrix(mem))
        outs.append(apply_n(deph, rho, 1).rho_Q.mat)
    assert np.abs(outs[0] - outs[1]).max() < 1e-12
    # pure |+> memory behaves like diag(1/2, 1/2)
    plus = build_unitary_model(correlated_dephasing_spec()).with_memory(DensityMatrix(dm([1, 1])))
    assert np.abs(apply_n(plus, rho, 1).rho_Q.mat - outs[0]).max() < 1e-12
    # memory |0><0| uses column 0 of gamma only
    out = apply_n(ch.with_memory(DensityMatrix.basis(0, 4)), rho, 1).rho_Q.mat
    expect = sum(spec.gamma[k, 0] * A @ rho.mat @ A.conj().T for k, A in enumerate(PAULIS))
    assert np.abs(out - expect).max() < 1e-12
    assert verify_appendix_A1(spec, trials=20)


def test_appendix_A2_examples():
    spec = mp_channel(MPParams(0.5))
    plus = DensityMatrix(dm([1, 1]))
    inputs = [DensityMatrix.basis(0, [2, 2, 2]), tensor_all([bell_state().density(), plus])]
    res = verify_appendix_A2(spec, inputs, 3, tol=1e-12, mem0=DensityMatrix.basis(1, 4))
    assert res and res.residual < 1e-12
    deph = correlated_dephasing_spec()
    ch = build_unitary_model(deph)
    traj = memory_diagonal_trajectory(ch, random_density_matrix(8, np.random.default_rng(0), dims=[2] * 3), 3)
    assert np.abs(traj - traj[0]).max() < 1e-14


@given(seeds)
def test_appendix_A2_random_specs(seed):
    rng = np.random.default_rng(seed)
    spec = random_unitary_spec(rng)
    inputs = [random_density_matrix(8, rng, dims=[2] * 3),
              tensor_all([DensityMatrix(dm(rng.normal(size=2) + 1j * rng.normal(size=2))) for _ in range(3)])]
    assert verify_appendix_A2(spec, inputs, 3, mem0=random_density_matrix(3, rng))
