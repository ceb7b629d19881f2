"""Repeated unitary interaction of transmitted systems with a shared memory.

Global ordering convention: ``Q1 ... Qn (R) M (M') E1 ... En`` where R is
an optional reference attached to the input and M' is an internal
reference purifying a mixed initial memory.  M' is bookkept together with
M, never with the environments.  Use ``i`` couples Q_i, M and a fresh
environment E_i prepared in |0>.  Environments are traced out straight
after each use unless the caller asks for the joint environment state.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    MAX_DIM, DensityMatrix, PureState, UnitaryMatrix,
    check_dim, purify, random_density_matrix, trace_distance_array,
)


@dataclass(frozen=True, eq=False)
class MemoryChannel:
    """Per-use unitary on (system, memory, environment) plus initial memory.

    ``U`` acts on C^d (x) C^d_M (x) C^d_E in that order.  Only its columns with
    the environment in |0> matter physically.  ``first_use_override`` (if
    set) replaces ``U`` on the very first use.
    """

    d: int
    d_M: int
    d_E: int
    U: np.ndarray
    mem0: DensityMatrix
    first_use_override: Optional[np.ndarray] = None
    name: str = ""
    flags: tuple = field(default=())

    def __post_init__(self):
        D = self.d * self.d_M * self.d_E
        U = np.asarray(getattr(self.U, "mat", self.U), dtype=complex)
        if U.shape != (D, D):
            raise ValueError(f"U has shape {U.shape}, expected {(D, D)}")
        UnitaryMatrix(U)
        U = U.copy()
        U.setflags(write=False)
        object.__setattr__(self, "U", U)
        if not isinstance(self.mem0, DensityMatrix):
            object.__setattr__(self, "mem0", DensityMatrix(self.mem0))
        if self.mem0.dim != self.d_M:
            raise ValueError(f"initial memory has dimension {self.mem0.dim}, expected {self.d_M}")
        if self.first_use_override is not None:
            V = np.asarray(getattr(self.first_use_override, "mat",
                                   self.first_use_override), dtype=complex)
            if V.shape != (D, D):
                raise ValueError(f"override has shape {V.shape}, expected {(D, D)}")
            UnitaryMatrix(V)
            V = V.copy()
            V.setflags(write=False)
            object.__setattr__(self, "first_use_override", V)
        object.__setattr__(self, "flags", tuple(self.flags))

    @property
    def perfect_memory(self):
        return self.d_E == 1

    @property
    def isometry(self):
        """U restricted to environment |0>: maps (Q, M) into (Q, M, E)."""
        return self.U[:, ::self.d_E]

    def kraus(self, first_use=False):
        """Kraus operators on (Q, M), one per environment basis state."""
        U = self.first_use_override if (first_use and self.first_use_override is not None) else self.U
        W = U[:, ::self.d_E].reshape(self.d * self.d_M, self.d_E, self.d * self.d_M)
        return [W[:, e, :] for e in range(self.d_E)]

    def with_memory(self, mem0):
        return dataclasses.replace(self, mem0=mem0)


@dataclass(frozen=True)
class JointOutput:
    """Marginals of the global output state after ``n`` uses.

    ``rho_QR`` is ordered Q1..Qn, R and ``rho_MQR`` is ordered Q1..Qn, R, M
    (followed by the memory's own purifying reference when ``mem0`` was
    mixed).
    """

    rho_Q: DensityMatrix
    rho_QM: DensityMatrix
    rho_M: DensityMatrix
    rho_E: Optional[DensityMatrix] = None
    rho_QR: Optional[DensityMatrix] = None
    rho_MQR: Optional[DensityMatrix] = None


class _Tensor:
    """Labelled state tensor: a vector or a density operator (kets then bras)."""

    def __init__(self, data, labels, dims, density):
        self.data = data
        self.labels = list(labels)
        self.dims = dict(zip(labels, dims))
        self.density = density

    @property
    def shape(self):
        return [self.dims[l] for l in self.labels]

    def apply(self, op, in_labels, out_labels, out_dims):
        k = len(self.labels)
        pos = [self.labels.index(l) for l in in_labels]
        rest = [i for i in range(k) if i not in pos]
        din = int(np.prod([self.dims[l] for l in in_labels]))
        rest_dims = [self.shape[i] for i in rest]
        drest = int(np.prod(rest_dims)) if rest else 1
        if self.density:
            t = self.data.transpose(pos + rest + [k + p for p in pos] + [k + r for r in rest])
            t = t.reshape(din, drest, din, drest)
            t = np.tensordot(op, t, axes=([1], [0]))
            t = np.tensordot(t, op.conj(), axes=([2], [1]))  # -> (out, rest, rest, out)
            t = t.transpose(0, 1, 3, 2)
            shape = list(out_dims) + rest_dims
            t = t.reshape(shape + shape)
        else:
            t = self.data.transpose(pos + rest).reshape(din, drest)
            t = (op @ t).reshape(list(out_dims) + rest_dims)
        new_labels = list(out_labels) + [self.labels[i] for i in rest]
        new_dims = dict(self.dims)
        for l in in_labels:
            new_dims.pop(l)
        new_dims.update(zip(out_labels, out_dims))
        out = _Tensor(t, new_labels, [new_dims[l] for l in new_labels], self.density)
        return out

    def apply_kraus(self, ops, labels):
        dims = [self.dims[l] for l in labels]
        parts = [self.apply(K, labels, labels, dims) for K in ops]
        out = parts[0]
        for p in parts[1:]:
            out.data = out.data + p.data
        return out

    def trace_out(self, labels):
        if not self.density:
            raise ValueError("trace_out needs a density tensor")
        k = len(self.labels)
        keep = [i for i, l in enumerate(self.labels) if l not in labels]
        ket = list(range(k))
        bra = [k + i if i in keep else i for i in range(k)]
        out_idx = keep + [k + i for i in keep]
        t = np.einsum(self.data, ket + bra, out_idx)
        kl = [self.labels[i] for i in keep]
        return _Tensor(t, kl, [self.dims[l] for l in kl], True)

    def marginal(self, labels):
        """Raw reduced density matrix on ``labels`` in the given order."""
        labels = list(labels)
        k = len(self.labels)
        pos = [self.labels.index(l) for l in labels]
        dk = int(np.prod([self.dims[l] for l in labels])) if labels else 1
        if not self.density:
            rest = [i for i in range(k) if i not in pos]
            a = self.data.transpose(pos + rest).reshape(dk, -1)
            return a @ a.conj().T
        red = self.trace_out([l for l in self.labels if l not in labels])
        p2 = [red.labels.index(l) for l in labels]
        m = len(labels)
        return red.data.transpose(p2 + [m + p for p in p2]).reshape(dk, dk)


def _qlabels(n):
    return [f"Q{i}" for i in range(n)]


def _memory_factor(mem0, purified):
    """Initial memory as (array, labels, dims, is_vector)."""
    if purified:
        psi = purify(mem0)
        if psi.dims[-1] == 1:
            return psi.vec, ["M"], [mem0.dim]
        return psi.vec, ["M", "Mr"], list(psi.dims)
    return np.asarray(mem0.mat), ["M"], [mem0.dim]


def _run_uses(ch, state, targets, first_use=True, keep_env=False):
    for step, q in enumerate(targets):
        use_v = first_use and step == 0 and ch.first_use_override is not None
        U = ch.first_use_override if use_v else ch.U
        if keep_env:
            W = U[:, ::ch.d_E]
            e = f"E{q[1:]}"
            state = state.apply(W, [q, "M"], [q, "M", e], [ch.d, ch.d_M, ch.d_E])
        else:
            state = state.apply_kraus(ch.kraus(first_use=use_v), [q, "M"])
    return state


def _as_n_fold(rho, ch, n):
    if n < 1:
        raise ValueError("number of uses must be at least 1")
    mat = np.asarray(rho.mat if isinstance(rho, DensityMatrix) else rho)
    if mat.shape != (ch.d ** n, ch.d ** n):
        raise ValueError(
            f"input has dimension {mat.shape[0]}, expected d^n = {ch.d ** n}")
    return mat


def _density_tensor(mat, labels, dims):
    return _Tensor(np.asarray(mat).reshape(list(dims) * 2), labels, dims, True)


def _finish(state, n, ref=False, mref=False, env=False):
    q = _qlabels(n)
    make = DensityMatrix.from_hermitian
    out = dict(
        rho_Q=make(state.marginal(q), [state.dims[l] for l in q]),
        rho_QM=make(state.marginal(q + ["M"]), [state.dims[l] for l in q + ["M"]]),
        rho_M=make(state.marginal(["M"]), [state.dims["M"]]),
    )
    if ref:
        qr = q + ["R"]
        mqr = qr + ["M"] + (["Mr"] if mref else [])
        out["rho_QR"] = make(state.marginal(qr), [state.dims[l] for l in qr])
        out["rho_MQR"] = make(state.marginal(mqr), [state.dims[l] for l in mqr])
    if env:
        e = [f"E{i}" for i in range(n)]
        out["rho_E"] = make(state.marginal(e), [state.dims[l] for l in e])
    return JointOutput(**out)


def _pure_start(ch, psi_vec, n, ref_dim):
    mvec, mlabels, mdims = _memory_factor(ch.mem0, purified=True)
    labels = _qlabels(n) + (["R"] if ref_dim else []) + mlabels
    dims = [ch.d] * n + ([ref_dim] if ref_dim else []) + mdims
    total = int(np.prod(dims)) * ch.d_E ** n
    check_dim(total, "global pure state (input, memory and environments)")
    vec = np.kron(psi_vec, mvec).reshape(dims)
    return _Tensor(vec, labels, dims, False)


def apply_n(ch: MemoryChannel, rho: DensityMatrix, n: int, keep_env=False) -> JointOutput:
    """Send an n-use input (possibly entangled across uses) through ``ch``.

    With ``keep_env`` the joint environment state is returned as well; this
    runs on a purification of input and memory and needs the whole global
    state to fit under the dimension cap.
    """
    mat = _as_n_fold(rho, ch, n)
    if keep_env:
        rho = rho if isinstance(rho, DensityMatrix) else DensityMatrix(rho)
        psi = purify(DensityMatrix(mat, [ch.d] * n, validate=False))
        r = psi.dims[-1]
        # the input's purifying reference plays the role of R and is dropped
        state = _pure_start(ch, psi.vec, n, r)
        state = _run_uses(ch, state, _qlabels(n), keep_env=True)
        return _finish(state, n, env=True)
    check_dim(mat.shape[0] * ch.d_M, "system-memory state")
    labels = _qlabels(n) + ["M"]
    dims = [ch.d] * n + [ch.d_M]
    state = _density_tensor(np.kron(mat, ch.mem0.mat), labels, dims)
    state = _run_uses(ch, state, _qlabels(n))
    return _finish(state, n)


def apply_n_purified(ch: MemoryChannel, psi: PureState, n: int, keep_env=None) -> JointOutput:
    """Send the Q part of a joint pure input |psi_QR> through ``n`` uses.

    ``psi`` lives on d^n (x) d_R with R last (d_R = 1 is allowed).  The
    channel acts as the identity on R.  ``keep_env=None`` returns the
    environment marginal only when the global pure state fits the cap.
    """
    if ch.d ** n == 0 or psi.dim % (ch.d ** n):
        raise ValueError(f"pure input of dimension {psi.dim} is not d^n x d_R for d^n = {ch.d ** n}")
    r = psi.dim // ch.d ** n
    mref = purify(ch.mem0).dims[-1] > 1
    if keep_env is None:
        total = psi.dim * ch.d_M * (ch.d_M if mref else 1) * ch.d_E ** n
        keep_env = total <= MAX_DIM
    if keep_env:
        state = _pure_start(ch, psi.vec, n, r)
        state = _run_uses(ch, state, _qlabels(n), keep_env=True)
        return _finish(state, n, ref=True, mref=mref, env=True)
    mvec, mlabels, mdims = _memory_factor(ch.mem0, purified=True)
    labels = _qlabels(n) + ["R"] + mlabels
    dims = [ch.d] * n + [r] + mdims
    check_dim(int(np.prod(dims)), "system-reference-memory state")
    full = np.kron(psi.vec, mvec)
    state = _density_tensor(np.outer(full, full.conj()), labels, dims)
    state = _run_uses(ch, state, _qlabels(n))
    return _finish(state, n, ref=True, mref=mref)


def evolve_joint(ch: MemoryChannel, rho_qm: DensityMatrix, targets: Sequence[int],
                 first_use=True) -> DensityMatrix:
    """Run uses on a joint (Q_1..Q_k, M) state, one per entry of ``targets``.

    ``rho_qm`` carries dims ``(d,)*k + (d_M,)``.  ``first_use`` says
    whether the first listed use is the channel's first (so that a
    first-use override applies).  Lets callers split a block of uses.
    """
    k = len(rho_qm.dims) - 1
    if rho_qm.dims != (ch.d,) * k + (ch.d_M,):
        raise ValueError(f"expected dims {(ch.d,) * k + (ch.d_M,)}, got {rho_qm.dims}")
    labels = _qlabels(k) + ["M"]
    state = _density_tensor(rho_qm.mat, labels, list(rho_qm.dims))
    state = _run_uses(ch, state, [f"Q{t}" for t in targets], first_use=first_use)
    return DensityMatrix.from_hermitian(state.marginal(labels), rho_qm.dims)


def channel_choi(ch: MemoryChannel, n: int) -> np.ndarray:
    """Unnormalised Choi matrix of the n-use channel (memory traced out).

    Returns ``J`` with ``J[a, b] = Lambda(|a><b|)`` as an array of shape
    (D, D, D, D), D = d^n, so that ``Lambda(X) = einsum('ab,abij->ij', X, J)``.
    """
    D = ch.d ** n
    check_dim(D * D * ch.d_M, "Choi state")
    q = _qlabels(n)
    labels = q + ["A"] + ["M"]
    dims = [ch.d] * n + [D, ch.d_M]
    omega = np.eye(D).reshape(-1)
    init = np.kron(np.outer(omega, omega), ch.mem0.mat)
    state = _density_tensor(init, labels, dims)
    state = _run_uses(ch, state, q)
    J = state.marginal(q + ["A"]).reshape(D, D, D, D)
    # J[i, a, j, b] = Lambda(|a><b|)_{ij}
    return J.transpose(1, 3, 0, 2)


def memoryless_probe(ch: MemoryChannel, trials: int = 20, tol: float = 1e-10, seed=0) -> bool:
    """Numerical witness that a single use ignores the memory state.

    Draws ``trials`` random (input, memory, memory') triples and checks the
    single-use output does not depend on which memory was used.  The
    per-use unitary ``U`` is probed, not the first-use override.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    probe = dataclasses.replace(ch, first_use_override=None)
    for _ in range(trials):
        rho = random_density_matrix(ch.d, rng)
        outs = []
        for _ in range(2):
            mem = random_density_matrix(ch.d_M, rng)
            outs.append(apply_n(probe.with_memory(mem), rho, 1).rho_Q.mat)
        if trace_distance_array(*outs) > tol:
            return False
    return True
