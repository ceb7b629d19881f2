"""Ready-made channels and codes.

Name registry for the CLI: ``corr-dephasing-cphase``, ``corr-dephasing-cnot``,
``shift``, ``mp`` (plus ``identity`` and ``dephasing-markov``).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import (
    I2, PAULIS, Z, DensityMatrix, PureState, partial_trace, random_pure_state,
    tensor_all, trace_distance_array,
)
from .markov import MarkovNoiseSpec, complete_unitary, validate_distribution
from .memory import MemoryChannel, apply_n

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
CPHASE = np.diag([1, 1, 1, -1]).astype(complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def correlated_dephasing_cphase() -> MemoryChannel:
    """Controlled phase from the memory onto each qubit, memory starts in |+>."""
    plus = PureState([1, 1], normalize=True).density()
    return MemoryChannel(2, 2, 1, CPHASE, plus, name="corr-dephasing-cphase")


def correlated_dephasing_cnot() -> MemoryChannel:
    """CNOT from each qubit onto a memory starting in |0>.

    Same action on the transmitted qubits as the controlled-phase version,
    since CPHASE = (I x H) CNOT (I x H); the memory ends up in the other basis.
    """
    zero = DensityMatrix.basis(0, 2)
    return MemoryChannel(2, 2, 1, CNOT, zero, name="corr-dephasing-cnot")


def shift_channel(mem0: DensityMatrix | None = None) -> MemoryChannel:
    """SWAP between each transmitted qubit and the memory (default memory |0>)."""
    mem0 = DensityMatrix.basis(0, 2) if mem0 is None else mem0
    return MemoryChannel(2, 2, 1, SWAP, mem0, name="shift")


def identity_channel(d: int = 2) -> MemoryChannel:
    return MemoryChannel(d, 1, 1, np.eye(d), DensityMatrix(np.eye(1)), name="identity")


def memoryless_channel(kraus: Sequence[np.ndarray], name="memoryless") -> MemoryChannel:
    """Stinespring dilation of a single-use channel with a trivial memory."""
    ops = [np.asarray(A, dtype=complex) for A in kraus]
    d, r = ops[0].shape[0], len(ops)
    cols = np.zeros((d * r, d), dtype=complex)
    for a in range(d):
        v = np.zeros((d, r), dtype=complex)
        for k, A in enumerate(ops):
            v[:, k] = A[:, a]
        cols[:, a] = v.reshape(-1)
    U = complete_unitary(cols, [a * r for a in range(d)])
    return MemoryChannel(d, 1, r, U, DensityMatrix(np.eye(1)), name=name)


def correlated_dephasing_spec() -> MarkovNoiseSpec:
    """Markov form of correlated dephasing: errors {I, Z}, gamma = I, p0 = (1/2, 1/2)."""
    return MarkovNoiseSpec((I2, Z), np.eye(2), np.array([0.5, 0.5]))


@dataclass(frozen=True)
class MPParams:
    mu: float
    p: tuple = (0.25, 0.25, 0.25, 0.25)

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"correlation parameter mu must lie in [0, 1], got {self.mu}")
        p = validate_distribution(self.p, 4, "Pauli distribution p")
        object.__setattr__(self, "p", tuple(float(x) for x in p))


def mp_channel(params: MPParams) -> MarkovNoiseSpec:
    """Pauli errors with gamma[k, j] = (1 - mu) p_k + mu delta_jk and p0 = p."""
    p = np.array(params.p)
    gamma = (1 - params.mu) * np.tile(p[:, None], (1, 4)) + params.mu * np.eye(4)
    gamma /= gamma.sum(axis=0, keepdims=True)
    return MarkovNoiseSpec(PAULIS, gamma, p)


def pauli_channel_kraus(p):
    """Kraus operators sqrt(p_k) sigma_k of a single-use Pauli channel."""
    return [np.sqrt(pk) * s for pk, s in zip(p, PAULIS)]


# -- codes ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Code:
    """Encoding isometry plus a decoding channel given by Kraus operators.

    ``encoder`` maps d^k logical amplitudes into d^n physical ones; the
    decoder Kraus operators map d^n back to d^k.
    """

    encoder: np.ndarray
    decoder: tuple
    d: int
    k: int
    n: int
    name: str = ""

    @property
    def rate(self) -> Fraction:
        return Fraction(self.k, self.n)

    def encode(self, rho: DensityMatrix) -> DensityMatrix:
        W = self.encoder
        if rho.dim != W.shape[1]:
            raise ValueError(f"logical state has dimension {rho.dim}, code expects {W.shape[1]}")
        return DensityMatrix.from_hermitian(W @ rho.mat @ W.conj().T, [self.d] * self.n)

    def decode(self, rho: DensityMatrix) -> DensityMatrix:
        if rho.dim != self.encoder.shape[0]:
            raise ValueError(f"physical state has dimension {rho.dim}, code expects {self.encoder.shape[0]}")
        out = sum(K @ rho.mat @ K.conj().T for K in self.decoder)
        return DensityMatrix.from_hermitian(out, [self.d] * self.k)


def parity(x: int) -> int:
    return bin(x).count("1") % 2


def parity_code(n: int) -> Code:
    """n logical qubits in n + 1 physical: |x> -> |x>|parity(x)>, ancilla last.

    The decoder inverts the isometry on the code space and resets anything
    outside it to |0...0>.
    """
    k = 2 ** n
    W = np.zeros((2 * k, k), dtype=complex)
    for x in range(k):
        W[2 * x + parity(x), x] = 1.0
    P_out = np.eye(2 * k) - W @ W.conj().T
    ground = np.zeros((k, 1))
    ground[0, 0] = 1.0
    decoder = [W.conj().T]
    for c in np.flatnonzero(np.abs(np.diag(P_out)) > 0.5):
        e = np.zeros((1, 2 * k))
        e[0, c] = 1.0
        decoder.append(ground @ e)
    return Code(W, tuple(decoder), 2, n, n + 1, name="parity")


def parity_encode(state: DensityMatrix) -> DensityMatrix:
    n = len(state.dims) if all(x == 2 for x in state.dims) else int(round(np.log2(state.dim)))
    return parity_code(n).encode(state)


def parity_leakage(state: DensityMatrix) -> float:
    """Weight of ``state`` outside the image of the parity encoding."""
    n = int(round(np.log2(state.dim))) - 1
    W = parity_code(n).encoder
    return float(max(0.0, 1.0 - np.trace(W.conj().T @ state.mat @ W).real))


def parity_decode(state: DensityMatrix, strict=False) -> DensityMatrix:
    """Inverse of :func:`parity_encode` on the code space.

    Support outside the code space above 1e-8 raises ``ValueError`` when
    ``strict``; otherwise a warning is issued and that weight is reset to
    |0...0>.
    """
    n = int(round(np.log2(state.dim))) - 1
    if 2 ** (n + 1) != state.dim or n < 0:
        raise ValueError(f"parity-coded state must live on 2^(n+1) dimensions, got {state.dim}")
    leak = parity_leakage(state)
    if strict and leak > 1e-8:
        raise ValueError(f"state has weight {leak:.3e} outside the parity code space")
    if leak > 1e-8:
        warnings.warn(f"state has weight {leak:.3e} outside the parity code space", stacklevel=2)
    return parity_code(n).decode(state)


def shift_code(n: int) -> Code:
    """n - 1 logical qubits on n uses of the shift channel.

    Logical qubits go into positions 1..n-1 with |0> padding the last
    position; decoding discards output position 1 (the initial memory).
    """
    if n < 2:
        raise ValueError("the shift code needs at least two uses")
    k = 2 ** (n - 1)
    W = np.kron(np.eye(k), np.array([[1], [0]]))
    decoder = tuple(np.kron(np.array([[1 - e, e]]), np.eye(k)) for e in (0, 1))
    return Code(W.astype(complex), decoder, 2, n - 1, n, name="shift")


def recoverable_fraction(ch: MemoryChannel, n: int, seed=0, tol=1e-10) -> Fraction:
    """Fraction of n product inputs found intact at some output position.

    Sends n distinct random pure states and matches each to an unused
    output position whose marginal equals it within trace distance ``tol``.
    """
    rng = np.random.default_rng(seed)
    states = [random_pure_state(ch.d, rng).density() for _ in range(n)]
    out = apply_n(ch, tensor_all(states), n).rho_Q
    marg = [partial_trace(out, [j]).mat for j in range(n)]
    used = set()
    hits = 0
    for s in states:
        for j in range(n):
            if j not in used and trace_distance_array(s.mat, marg[j]) <= tol:
                used.add(j)
                hits += 1
                break
    return Fraction(hits, n)


def shift_positions(n: int):
    """Output position (0-based) of each input for n uses of the shift channel.

    Input i < n - 1 lands at i + 1; the last input stays in the memory.
    """
    return {i: (i + 1 if i + 1 < n else None) for i in range(n)}


BUILTIN_MEMORY_CHANNELS = {
    "corr-dephasing-cphase": correlated_dephasing_cphase,
    "corr-dephasing-cnot": correlated_dephasing_cnot,
    "shift": shift_channel,
    "identity": identity_channel,
}
