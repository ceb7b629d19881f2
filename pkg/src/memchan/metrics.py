"""Information quantities for memory channels.

All entropies are in bits.  Any function taking a channel accepts either
a :class:`~memchan.memory.MemoryChannel` or a
:class:`~memchan.markov.MarkovNoiseSpec` (converted through its unitary
model).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    DensityMatrix, PureState, binary_entropy, entropy_array, kron_all, purify,
    von_neumann_entropy, weyl_operators,
)
from .markov import MarkovNoiseSpec, build_unitary_model
from .memory import MemoryChannel, apply_n, apply_n_purified, channel_choi


def as_memory_channel(ch) -> MemoryChannel:
    if isinstance(ch, MarkovNoiseSpec):
        return build_unitary_model(ch)
    if isinstance(ch, MemoryChannel):
        return ch
    raise TypeError(f"expected a MemoryChannel or MarkovNoiseSpec, got {type(ch).__name__}")


def memory_dimension(ch: MemoryChannel) -> int:
    """Memory dimension including the purifying reference of a mixed mem0."""
    return ch.d_M * purify(ch.mem0).dims[-1]


@dataclass(frozen=True)
class Ensemble:
    """Weighted signal states on d^n (the n-use alphabet)."""

    members: tuple
    n: int

    def __post_init__(self):
        members = tuple((float(w), s if isinstance(s, DensityMatrix) else DensityMatrix(s))
                        for w, s in self.members)
        if not members:
            raise ValueError("ensemble is empty")
        w = np.array([m[0] for m in members])
        if w.min() < 0 or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"ensemble weights must be nonnegative and sum to 1 (sum {w.sum():.15g})")
        dim = members[0][1].dim
        if any(s.dim != dim for _, s in members):
            raise ValueError("ensemble states must share one dimension")
        object.__setattr__(self, "members", members)

    @property
    def weights(self):
        return np.array([w for w, _ in self.members])

    @property
    def states(self):
        return [s for _, s in self.members]

    @classmethod
    def uniform(cls, states, n):
        states = list(states)
        return cls(tuple((1.0 / len(states), s) for s in states), n)


def holevo_from_outputs(weights, outputs) -> float:
    """chi = S(sum p_i sigma_i) - sum p_i S(sigma_i) for raw output arrays."""
    avg = sum(w * o for w, o in zip(weights, outputs))
    return entropy_array(avg) - sum(w * entropy_array(o) for w, o in zip(weights, outputs) if w > 0)


def _check_ensemble(ens, ch, n):
    if ens.states[0].dim != ch.d ** n:
        raise ValueError(f"ensemble states have dimension {ens.states[0].dim}, expected d^n = {ch.d ** n}")


def holevo_quantity(ens: Ensemble, ch, n: int) -> float:
    """Holevo quantity per use of the n-use channel (memory traced out)."""
    ch = as_memory_channel(ch)
    _check_ensemble(ens, ch, n)
    outs = [apply_n(ch, s, n).rho_Q.mat for s in ens.states]
    return holevo_from_outputs(ens.weights, outs) / n


def entanglement_fidelity(ch, rho_in: DensityMatrix, n: Optional[int] = None, code=None) -> float:
    """<psi_QR| rho'_QR |psi_QR> for a purification of ``rho_in``.

    With a ``code`` (see :mod:`memchan.zoo`), ``rho_in`` is a logical state;
    it is encoded, sent through ``code.n`` uses and decoded before the
    overlap is taken.
    """
    ch = as_memory_channel(ch)
    psi = purify(rho_in)
    r = psi.dims[-1]
    if code is None:
        if n is None:
            n = int(round(np.log(rho_in.dim) / np.log(ch.d)))
        out = apply_n_purified(ch, psi, n, keep_env=False).rho_QR.mat
        return float(np.clip(np.vdot(psi.vec, out @ psi.vec).real, 0.0, 1.0))
    W = code.encoder
    if W.shape[1] != rho_in.dim:
        raise ValueError(f"input dimension {rho_in.dim} does not match the code's {W.shape[1]}")
    if code.d != ch.d or (n is not None and n != code.n):
        raise ValueError("code and channel disagree on dimension or number of uses")
    phys = (W @ psi.vec.reshape(rho_in.dim, r)).reshape(-1)
    phys_psi = PureState(phys, (ch.d,) * code.n + (r,), normalize=True)
    out = apply_n_purified(ch, phys_psi, code.n, keep_env=False).rho_QR.mat
    decoded = sum(np.kron(K, np.eye(r)) @ out @ np.kron(K, np.eye(r)).conj().T
                  for K in code.decoder)
    return float(np.clip(np.vdot(psi.vec, decoded @ psi.vec).real, 0.0, 1.0))


def entropy_exchange(ch, rho_in: DensityMatrix, n: int, route="auto") -> float:
    """Entropy S_E acquired by the environments over ``n`` uses.

    ``route='env'`` computes S(rho'_E) from the joint environment state;
    ``route='mqr'`` computes S(rho'_MQR), equal to it by purity of the
    global state and much cheaper.  ``'auto'`` uses the latter.
    """
    ch = as_memory_channel(ch)
    psi = purify(rho_in)
    if route == "env":
        return von_neumann_entropy(apply_n_purified(ch, psi, n, keep_env=True).rho_E)
    if route not in ("auto", "mqr"):
        raise ValueError(f"unknown route {route!r}")
    return von_neumann_entropy(apply_n_purified(ch, psi, n, keep_env=False).rho_MQR)


def coherent_information(ch, rho_in: DensityMatrix, n: int) -> float:
    """S(rho'_Q) - S_E."""
    ch = as_memory_channel(ch)
    out = apply_n_purified(ch, purify(rho_in), n, keep_env=False)
    return von_neumann_entropy(out.rho_Q) - von_neumann_entropy(out.rho_MQR)


def fano_bound(F: float, d: int, d_M: int, N: int = 1) -> float:
    """log2 d_M + h(F) + (1 - F) log2(d^(2N) - 1)."""
    if not 0.0 <= F <= 1.0:
        raise ValueError(f"fidelity must lie in [0, 1], got {F}")
    if d < 2 or d_M < 1 or N < 1:
        raise ValueError(f"need d >= 2, d_M >= 1, N >= 1 (got d={d}, d_M={d_M}, N={N})")
    tail = (1.0 - F) * np.log2(float(d) ** (2 * N) - 1.0) if F < 1.0 else 0.0
    return float(np.log2(d_M) + binary_entropy(F) + tail)


@dataclass(frozen=True)
class RateSandwich:
    lower: float
    upper: float
    with_memory_rate: float

    @property
    def ordered(self):
        tol = 1e-9
        return self.lower <= self.with_memory_rate + tol and self.with_memory_rate <= self.upper + tol


def rate_sandwich(ch, n: int, ens: Ensemble) -> RateSandwich:
    """Holevo rates per use without and with access to the final memory.

    ``upper`` is ``lower + (2/n) log2 d_M``.
    """
    ch = as_memory_channel(ch)
    _check_ensemble(ens, ch, n)
    outs = [apply_n(ch, s, n) for s in ens.states]
    w = ens.weights
    lower = holevo_from_outputs(w, [o.rho_Q.mat for o in outs]) / n
    with_mem = holevo_from_outputs(w, [o.rho_QM.mat for o in outs]) / n
    return RateSandwich(lower, lower + 2.0 * np.log2(ch.d_M) / n, with_mem)


def dense_coding_outputs(ch: MemoryChannel, n: int):
    """Joint (Q, R) outputs for all d^(2n) clock-and-shift encodings of |Phi>."""
    D = ch.d ** n
    J = channel_choi(ch, n)
    outs = []
    for ops in itertools.product(weyl_operators(ch.d), repeat=n):
        c = kron_all(ops) / np.sqrt(D)  # amplitudes c[a, r] of (P x I)|Phi>
        rho = np.einsum("ar,bs,abij->irjs", c, c.conj(), J, optimize=True)
        outs.append(rho.reshape(D * D, D * D))
    return outs


def ce_trend(ch, n_list: Sequence[int]):
    """Entanglement-assisted Holevo rate per use of a dense-coding ensemble.

    For each n the sender applies one of the d^(2n) clock-and-shift strings
    to half of a maximally entangled pair, uniformly at random; the value is
    the Holevo quantity of the joint outputs divided by n, clipped to
    [0, 2 log2 d].  A lower bound on the assisted rate at block length n.
    """
    ch = as_memory_channel(ch)
    out = []
    cap = 2.0 * np.log2(ch.d)
    for n in n_list:
        outs = dense_coding_outputs(ch, n)
        w = np.full(len(outs), 1.0 / len(outs))
        out.append(float(np.clip(holevo_from_outputs(w, outs) / n, 0.0, cap)))
    return out


@dataclass
class InfoReport:
    holevo_bits_per_use: Optional[float] = None
    S_E_bits: Optional[float] = None
    F: Optional[float] = None
    coherent_info_bits: Optional[float] = None
    fano_bound_bits: Optional[float] = None
    rate_lower: Optional[float] = None
    rate_upper: Optional[float] = None
    flags: list = field(default_factory=list)

    def as_dict(self):
        return dict(self.__dict__)


def info_report(ch, rho_in: DensityMatrix, n: int, ens: Optional[Ensemble] = None) -> InfoReport:
    """Fidelity, entropy exchange, coherent information and Fano bound for one input.

    With an ensemble, the Holevo rate and the rate sandwich are filled in too.
    """
    ch = as_memory_channel(ch)
    psi = purify(rho_in)
    out = apply_n_purified(ch, psi, n, keep_env=False)
    F = float(np.clip(np.vdot(psi.vec, out.rho_QR.mat @ psi.vec).real, 0.0, 1.0))
    S_E = von_neumann_entropy(out.rho_MQR)
    rep = InfoReport(
        S_E_bits=S_E, F=F,
        coherent_info_bits=von_neumann_entropy(out.rho_Q) - S_E,
        fano_bound_bits=fano_bound(F, ch.d, memory_dimension(ch), n),
    )
    if S_E > rep.fano_bound_bits + 1e-9:
        rep.flags.append("fano-violated")
    if ens is not None:
        rs = rate_sandwich(ch, n, ens)
        rep.holevo_bits_per_use = rs.lower
        rep.rate_lower, rep.rate_upper = rs.lower, rs.upper
        if not rs.ordered:
            rep.flags.append("rate-sandwich-violated")
    return rep
