"""Channels with Markov-correlated noise.

A :class:`MarkovNoiseSpec` holds a family of error operators ``A_k``, a
column-stochastic transition matrix ``gamma`` with ``gamma[k, j]`` the
probability of error ``k`` given previous error ``j``, and the
distribution ``p0`` of the error on the first transmitted state.

Two constructions of the same n-use channel live here: the explicit sum
over error strings (:func:`markov_channel_direct`) and the unitary memory
model (:func:`build_unitary_model`), in which the memory records the index
of the last error.
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .core import (
    UNITARY_TOL, DensityMatrix, PureState, partial_trace, random_density_matrix,
    random_pure_state, tensor_all, trace_distance_array,
)
from .errors import ResourceCapError
from .memory import MemoryChannel, apply_n, evolve_joint

STOCHASTIC_TOL = 1e-12
MAX_DIRECT_TERMS = 4 ** 8  # error strings; n <= 8 for a four-operator family


def validate_gamma(gamma):
    """Return ``gamma`` as a float array or raise naming the bad column."""
    g = np.array(gamma, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("transition matrix has non-finite entries")
    if g.min() < -STOCHASTIC_TOL or g.max() > 1 + STOCHASTIC_TOL:
        raise ValueError("transition matrix entries must lie in [0, 1]")
    sums = g.sum(axis=0)
    for j, s in enumerate(sums):
        if abs(s - 1.0) > STOCHASTIC_TOL:
            raise ValueError(f"transition matrix column {j} sums to {s:.12g}, expected 1")
    return g


def validate_distribution(p, m=None, what="distribution"):
    p = np.array(p, dtype=float).reshape(-1)
    if m is not None and p.size != m:
        raise ValueError(f"{what} has {p.size} entries, expected {m}")
    if not np.all(np.isfinite(p)) or p.min() < -STOCHASTIC_TOL or p.max() > 1 + STOCHASTIC_TOL:
        raise ValueError(f"{what} entries must lie in [0, 1]")
    if abs(p.sum() - 1.0) > STOCHASTIC_TOL:
        raise ValueError(f"{what} sums to {p.sum():.12g}, expected 1")
    return p


@dataclass(frozen=True, eq=False)
class MarkovNoiseSpec:
    """Error operators, transition matrix and first-error distribution.

    The operators need not be complete on their own: the requirement is
    that every conditional channel ``rho -> sum_k gamma[k, j] A_k rho A_k^dagger``
    (and the first-use one weighted by ``p0``) preserves the trace.  For a
    unitary family this holds automatically.
    """

    kraus: tuple
    gamma: np.ndarray
    p0: np.ndarray

    def __post_init__(self):
        ops = tuple(np.array(A, dtype=complex) for A in self.kraus)
        if not ops:
            raise ValueError("need at least one error operator")
        d = ops[0].shape[0]
        for k, A in enumerate(ops):
            if A.shape != (d, d):
                raise ValueError(f"error operator {k} has shape {A.shape}, expected {(d, d)}")
            if not np.all(np.isfinite(A)):
                raise ValueError(f"error operator {k} has non-finite entries")
            A.setflags(write=False)
        m = len(ops)
        g = validate_gamma(self.gamma)
        if g.shape[0] != m:
            raise ValueError(f"transition matrix is {g.shape[0]}x{g.shape[0]} but there are {m} operators")
        p0 = validate_distribution(self.p0, m, "initial distribution p0")
        gram = np.array([A.conj().T @ A for A in ops])
        eye = np.eye(d)
        for j in range(m):
            dev = np.abs(np.tensordot(g[:, j], gram, axes=1) - eye).max()
            if dev > UNITARY_TOL:
                raise ValueError(
                    f"conditional channel for previous error {j} is not trace preserving "
                    f"(deviation {dev:.3e})")
        dev = np.abs(np.tensordot(p0, gram, axes=1) - eye).max()
        if dev > UNITARY_TOL:
            raise ValueError(f"first-use channel is not trace preserving (deviation {dev:.3e})")
        g.setflags(write=False)
        p0.setflags(write=False)
        object.__setattr__(self, "kraus", ops)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "p0", p0)

    @property
    def d(self):
        return self.kraus[0].shape[0]

    @property
    def m(self):
        return len(self.kraus)

    @property
    def unitary_kraus(self):
        eye = np.eye(self.d)
        return all(np.abs(A.conj().T @ A - eye).max() <= UNITARY_TOL for A in self.kraus)


class SteadyState(NamedTuple):
    distribution: np.ndarray
    regular: bool


def is_regular(gamma):
    """True iff some power gamma^k, k <= m^2 - 2m + 2, is entrywise positive."""
    g = np.asarray(gamma) > 0
    m = g.shape[0]
    power = g.copy()
    for _ in range(m * m - 2 * m + 2):
        if power.all():
            return True
        power = (power.astype(int) @ g.astype(int)) > 0
    return bool(power.all())


def steady_state(gamma, p0=None, tol=1e-13, max_iter=1_000_000) -> SteadyState:
    """Fixed point of ``gamma`` by power iteration from the uniform vector.

    For a chain that is not regular the fixed point need not be unique; if
    ``p0`` is already fixed it is returned, and a warning is issued either
    way.
    """
    g = validate_gamma(gamma)
    m = g.shape[0]
    regular = is_regular(g)
    if not regular:
        msg = "transition matrix is not regular; steady state is not unique"
        if p0 is not None:
            p0 = validate_distribution(p0, m, "p0")
            if np.abs(g @ p0 - p0).sum() <= 1e-12:
                warnings.warn(msg + "; returning p0, which is already stationary", stacklevel=2)
                return SteadyState(p0.copy(), False)
        warnings.warn(msg, stacklevel=2)
    x = np.full(m, 1.0 / m)
    for _ in range(max_iter):
        nxt = g @ x
        nxt /= nxt.sum()
        if np.abs(nxt - x).sum() < tol:
            x = nxt
            break
        x = nxt
    else:
        # periodic chains oscillate; fall back to the eigenvector
        w, v = np.linalg.eig(g)
        x = np.abs(np.real(v[:, np.argmin(np.abs(w - 1))]))
        x /= x.sum()
    return SteadyState(x, regular)


def convergence_fit(gamma, p0, k_max=20):
    """Fit ||gamma^k p0 - p_ss||_1 ~ C |lambda_2|^k over k = 1..k_max.

    Returns ``(C, lambda2, rel_residual)`` where ``rel_residual`` is the
    largest relative deviation of the fitted curve from the data.  Points
    already at round-off level (< 1e-14) are left out of the fit.
    """
    g = validate_gamma(gamma)
    p_ss = steady_state(g).distribution
    eig = np.sort(np.abs(np.linalg.eigvals(g)))[::-1]
    lam2 = float(eig[1]) if eig.size > 1 else 0.0
    ks, errs = [], []
    x = np.asarray(p0, dtype=float)
    for k in range(1, k_max + 1):
        x = g @ x
        e = np.abs(x - p_ss).sum()
        if e > 1e-14:
            ks.append(k)
            errs.append(e)
    if not ks or lam2 == 0.0:
        return 0.0, lam2, 0.0
    ks, errs = np.array(ks), np.array(errs)
    logC = np.mean(np.log(errs) - ks * np.log(lam2))
    fit = np.exp(logC) * lam2 ** ks
    return float(np.exp(logC)), lam2, float(np.max(np.abs(fit - errs) / errs))


def _apply_local(mat, dims, op, site):
    """op acting on one subsystem of a density matrix (both sides)."""
    n = len(dims)
    t = mat.reshape(dims + dims)
    t = np.moveaxis(np.tensordot(op, t, axes=([1], [site])), 0, site)
    t = np.moveaxis(np.tensordot(t, op.conj(), axes=([n + site], [1])), -1, n + site)
    return t.reshape(mat.shape)


def markov_channel_direct(spec: MarkovNoiseSpec, rho: DensityMatrix, n: int,
                          max_terms=MAX_DIRECT_TERMS) -> DensityMatrix:
    """Explicit sum over error strings for ``n`` uses.

    Error string (i_1, ..., i_n) has weight ``p0[i_1] * prod_t gamma[i_t, i_{t-1}]``
    and applies A_{i_1} (x) ... (x) A_{i_n}, with A_{i_1} on the first
    transmitted system.
    """
    if n < 1:
        raise ValueError("number of uses must be at least 1")
    d, m = spec.d, spec.m
    if rho.dim != d ** n:
        raise ValueError(f"input has dimension {rho.dim}, expected {d ** n}")
    if m ** n > max_terms:
        raise ResourceCapError(f"{m}^{n} error strings exceed the cap of {max_terms}")
    dims = [d] * n
    g, p0 = spec.gamma, spec.p0
    out = np.zeros_like(rho.mat)
    base = np.asarray(rho.mat)
    # depth-first over strings so that shared prefixes are applied once
    stack = [(0, None, 1.0, base)]
    while stack:
        site, prev, w, mat = stack.pop()
        if site == n:
            out += w * mat
            continue
        for k in range(m):
            pk = p0[k] if prev is None else g[k, prev]
            if pk == 0.0:
                continue
            stack.append((site + 1, k, w * pk, _apply_local(mat, dims, spec.kraus[k], site)))
    return DensityMatrix.from_hermitian(out, dims)


def complete_unitary(cols: np.ndarray, placed: Sequence[int], tol=1e-10) -> np.ndarray:
    """Extend orthonormal columns to a full unitary.

    ``cols`` (D x r) go to column positions ``placed``; the remaining
    positions are filled in increasing order by Gram-Schmidt over the
    canonical basis vectors e_0, e_1, ... (skipping dependent ones).
    """
    D = cols.shape[0]
    gram_dev = np.abs(cols.conj().T @ cols - np.eye(cols.shape[1])).max()
    if gram_dev > UNITARY_TOL:
        raise ValueError(f"columns are not orthonormal (deviation {gram_dev:.3e})")
    U = np.zeros((D, D), dtype=complex)
    U[:, list(placed)] = cols
    basis = [cols[:, i] for i in range(cols.shape[1])]
    free = [c for c in range(D) if c not in set(placed)]
    candidate = 0
    for c in free:
        while True:
            if candidate >= D:
                raise RuntimeError("ran out of basis vectors during completion")
            v = np.zeros(D, dtype=complex)
            v[candidate] = 1.0
            candidate += 1
            for _ in range(2):
                for b in basis:
                    v -= np.vdot(b, v) * b
            nv = np.linalg.norm(v)
            if nv > tol:
                v /= nv
                break
        basis.append(v)
        U[:, c] = v
    return U


def _markov_unitary(ops, weights):
    """Full unitary on (Q, M, E) realising |a>|j>|0> -> sum_k sqrt(w[k, j]) A_k|a>|k>|j>.

    ``weights`` is m x m with column j the error distribution given j.
    """
    d, m = ops[0].shape[0], len(ops)
    D = d * m * m
    cols = np.zeros((D, d * m), dtype=complex)
    placed = []
    for a in range(d):
        for j in range(m):
            v = np.zeros((d, m, m), dtype=complex)
            for k in range(m):
                if weights[k, j] > 0:
                    v[:, k, j] += np.sqrt(weights[k, j]) * ops[k][:, a]
            cols[:, a * m + j] = v.reshape(-1)
            placed.append((a * m + j) * m)
    return complete_unitary(cols, placed)


def build_unitary_model(spec: MarkovNoiseSpec) -> MemoryChannel:
    """Memory-channel realisation with d_M = d_E = m.

    The initial memory is diag(alpha) with gamma @ alpha = p0 when gamma is
    invertible and alpha is a valid distribution.  Otherwise the memory
    starts in the steady state and a first-use override draws the first
    error from ``p0`` directly; the channel's ``flags`` say which path ran.
    """
    m, g, p0 = spec.m, spec.gamma, spec.p0
    U = _markov_unitary(spec.kraus, g)
    flags = []
    alpha = None
    if np.linalg.matrix_rank(g, tol=1e-12) == m:
        alpha = np.linalg.solve(g, p0)
        if alpha.min() < -STOCHASTIC_TOL or alpha.max() > 1 + STOCHASTIC_TOL:
            flags.append("fallback:invalid-alpha")
            alpha = None
    else:
        flags.append("fallback:singular-gamma")
    if alpha is not None:
        alpha = np.clip(alpha, 0.0, 1.0)
        alpha /= alpha.sum()
        return MemoryChannel(spec.d, m, m, U, DensityMatrix(np.diag(alpha)),
                             name="markov-unitary", flags=tuple(flags))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p_ss = steady_state(g, p0).distribution
    V = _markov_unitary(spec.kraus, np.tile(p0[:, None], (1, m)))
    return MemoryChannel(spec.d, m, m, U, DensityMatrix(np.diag(p_ss)),
                         first_use_override=V, name="markov-unitary", flags=tuple(flags))


def _random_input(d, n, rng, trial):
    D = d ** n
    if trial % 2:
        return random_pure_state(D, rng, [d] * n).density()
    return random_density_matrix(D, rng, dims=[d] * n)


def equivalence_check(spec: MarkovNoiseSpec, n: int, trials: int = 100, seed=0,
                      direct=None) -> float:
    """Largest trace distance between the two constructions on random inputs.

    Inputs alternate between full-rank mixed states and pure states, both
    generically entangled across the ``n`` uses.  ``direct`` replaces the
    string-sum evaluator (used to inject faults in tests).
    """
    direct = markov_channel_direct if direct is None else direct
    ch = build_unitary_model(spec)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(trials):
        rho = _random_input(spec.d, n, rng, t)
        a = direct(spec, rho, n).mat
        b = apply_n(ch, rho, n).rho_Q.mat
        worst = max(worst, trace_distance_array(a, b))
    return worst


def steady_memory_channel(spec: MarkovNoiseSpec) -> MemoryChannel:
    """Unitary model started in the steady-state memory, no first-use override."""
    ch = build_unitary_model(spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p_ss = steady_state(spec.gamma, spec.p0).distribution
    return dataclasses.replace(ch, mem0=DensityMatrix(np.diag(p_ss)), first_use_override=None)


def _default_product_inputs(d, l, rng):
    plus = PureState(np.ones(d), normalize=True).density()
    phase = PureState(np.exp(2j * np.pi * np.arange(d) / d), normalize=True).density()
    zero = PureState.basis(0, d).density()
    sets = [[zero] * l, [plus] * l, [phase] * l]
    for _ in range(2):
        sets.append([random_pure_state(d, rng).density() for _ in range(l)])
    return sets


def n_block_approximation_error(spec: MarkovNoiseSpec, n: int, l: int,
                                inputs=None, seed=0) -> float:
    """Distance between the true l-use output and its n-use segmentation.

    The segmented channel runs each block of ``n`` uses from the
    steady-state memory, independently.  ``inputs`` is a list of product
    inputs, each a sequence of ``l`` single-use states; the largest trace
    distance over them is returned.
    """
    if n < 1 or l < 1 or l % n:
        raise ValueError(f"block length {n} must divide total length {l}")
    true_ch = build_unitary_model(spec)
    seg_ch = steady_memory_channel(spec)
    if inputs is None:
        inputs = _default_product_inputs(spec.d, l, np.random.default_rng(seed))
    worst = 0.0
    for seq in inputs:
        seq = list(seq)
        if len(seq) != l:
            raise ValueError(f"product input has {len(seq)} factors, expected {l}")
        exact = apply_n(true_ch, tensor_all(seq), l).rho_Q.mat
        blocks = [apply_n(seg_ch, tensor_all(seq[s:s + n]), n).rho_Q.mat
                  for s in range(0, l, n)]
        approx = blocks[0]
        for b in blocks[1:]:
            approx = np.kron(approx, b)
        worst = max(worst, trace_distance_array(exact, approx))
    return worst


def _require_unitary(spec):
    if not spec.unitary_kraus:
        raise ValueError("this derivation needs a unitary error family (A_k^dagger A_k = I)")


def memory_diagonal_step(spec: MarkovNoiseSpec, diag_in) -> np.ndarray:
    """Predicted memory diagonal after one use: gamma @ diag_in."""
    _require_unitary(spec)
    p = validate_distribution(diag_in, spec.m, "memory diagonal")
    return spec.gamma @ p


class CheckResult(NamedTuple):
    passed: bool
    residual: float

    def __bool__(self):
        return bool(self.passed)


def _phase_twin(lam, rng):
    ph = np.exp(2j * np.pi * rng.random(lam.shape[0]))
    return (ph[:, None] * lam) * ph.conj()[None, :]


def verify_appendix_A1(spec: MarkovNoiseSpec, trials: int = 100, tol: float = 1e-12,
                       seed=0) -> CheckResult:
    """Only the memory diagonal influences the next use.

    Each trial compares the single-use output for a random memory, its
    fully dephased version and a copy with rotated off-diagonal phases, and
    checks all of them against sum_j lam_jj sum_k gamma[k, j] A_k rho A_k^dagger.
    """
    ch = dataclasses.replace(build_unitary_model(spec), first_use_override=None)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        rho = random_density_matrix(spec.d, rng)
        lam = random_density_matrix(spec.m, rng).mat
        diag = np.real(np.diag(lam))
        formula = sum(diag[j] * spec.gamma[k, j] * (A @ rho.mat @ A.conj().T)
                      for j in range(spec.m) for k, A in enumerate(spec.kraus))
        for mem in (lam, np.diag(diag), _phase_twin(lam, rng)):
            out = apply_n(ch.with_memory(DensityMatrix.from_hermitian(mem)), rho, 1).rho_Q.mat
            worst = max(worst, trace_distance_array(out, formula))
    return CheckResult(worst <= tol, worst)


def memory_diagonal_trajectory(ch: MemoryChannel, rho: DensityMatrix, k_steps: int):
    """Memory diagonal after 0, 1, ..., k_steps uses on input ``rho`` (on d^k_steps)."""
    if rho.dim != ch.d ** k_steps:
        raise ValueError(f"input has dimension {rho.dim}, expected {ch.d ** k_steps}")
    joint = DensityMatrix(np.kron(rho.mat, ch.mem0.mat), (ch.d,) * k_steps + (ch.d_M,),
                          validate=False)
    diags = [np.real(np.diag(ch.mem0.mat)).copy()]
    for t in range(k_steps):
        joint = evolve_joint(ch, joint, [t], first_use=(t == 0))
        diags.append(np.real(np.diag(partial_trace(joint, [k_steps]).mat)).copy())
    return np.array(diags)


def verify_appendix_A2(spec: MarkovNoiseSpec, input_states, k_steps: int,
                       tol: float = 1e-11, mem0: Optional[DensityMatrix] = None) -> CheckResult:
    """Memory diagonal follows the Markov chain, whatever is transmitted.

    For every input (a state on d^k_steps, entangled or not) the simulated
    diagonal after k uses must equal gamma^k @ diag(mem0) for k = 0..k_steps,
    and the trajectories must coincide across inputs.  The per-use unitary
    is used throughout; ``mem0`` defaults to the model's initial memory.
    """
    _require_unitary(spec)
    ch = dataclasses.replace(build_unitary_model(spec), first_use_override=None)
    if mem0 is not None:
        ch = ch.with_memory(mem0)
    d0 = np.real(np.diag(ch.mem0.mat))
    predicted = [d0]
    for _ in range(k_steps):
        predicted.append(spec.gamma @ predicted[-1])
    predicted = np.array(predicted)
    worst = 0.0
    first = None
    for rho in input_states:
        traj = memory_diagonal_trajectory(ch, rho, k_steps)
        worst = max(worst, np.abs(traj - predicted).max())
        if first is None:
            first = traj
        else:
            worst = max(worst, np.abs(traj - first).max())
    return CheckResult(worst <= tol, float(worst))
