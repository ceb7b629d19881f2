"""Dense quantum-state primitives.

Everything here works on plain numpy arrays wrapped in small immutable
value types.  Subsystem dimensions travel with each object so that
partial traces and tensor products never need to guess the factorisation.

Conventions: computational basis in lexicographic order, the first entry
of ``dims`` is the most significant digit, entropies are in bits.
"""
from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

from .errors import ResourceCapError

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10
UNITARY_TOL = 1e-10
NORM_TOL = 1e-12
EIG_CUTOFF = 1e-12

#: Largest Hilbert-space dimension any dense object may have.
MAX_DIM = 2 ** 14


def check_dim(dim, what="state"):
    if dim > MAX_DIM:
        raise ResourceCapError(
            f"{what} dimension {dim} exceeds the dense cap of {MAX_DIM}")


def _as_matrix(mat, square=True):
    arr = np.array(mat, dtype=complex)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix contains NaN or Inf entries")
    return arr


def _resolve_dims(dims, total):
    if dims is None:
        return (int(total),)
    dims = tuple(int(x) for x in dims)
    if any(x < 1 for x in dims):
        raise ValueError(f"subsystem dimensions must be positive: {dims}")
    if int(np.prod(dims)) != total:
        raise ValueError(f"dims {dims} do not multiply to {total}")
    return dims


def _freeze(arr):
    arr.setflags(write=False)
    return arr


class DensityMatrix:
    """Positive, unit-trace Hermitian operator with a subsystem layout.

    Construction validates the invariants (Hermitian, trace one and no
    eigenvalue below ``-POSITIVITY_TOL``).  Slightly negative eigenvalues
    above that floor are kept as they are, never clipped.
    """

    __slots__ = ("mat", "dims")

    def __init__(self, mat, dims=None, validate=True):
        arr = _as_matrix(mat)
        check_dim(arr.shape[0])
        dims = _resolve_dims(dims, arr.shape[0])
        if validate:
            herm = np.max(np.abs(arr - arr.conj().T)) if arr.size else 0.0
            if herm > HERMITIAN_TOL:
                raise ValueError(f"matrix is not Hermitian (deviation {herm:.3e})")
            tr = np.trace(arr).real
            if abs(tr - 1.0) > TRACE_TOL:
                raise ValueError(f"trace is {tr!r}, expected 1")
            lam_min = np.linalg.eigvalsh((arr + arr.conj().T) / 2).min()
            if lam_min < -POSITIVITY_TOL:
                raise ValueError(f"matrix is not positive (eigenvalue {lam_min:.3e})")
        object.__setattr__(self, "mat", _freeze(arr))
        object.__setattr__(self, "dims", dims)

    def __setattr__(self, name, value):
        raise AttributeError("DensityMatrix is immutable")

    @property
    def dim(self):
        return self.mat.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.mat if dtype is None else self.mat.astype(dtype)

    def __repr__(self):
        return f"DensityMatrix(dims={self.dims})"

    @classmethod
    def from_hermitian(cls, mat, dims=None):
        """Symmetrise ``mat`` as (X + X^dagger)/2 and then validate."""
        arr = np.asarray(mat, dtype=complex)
        return cls((arr + arr.conj().T) / 2, dims)

    @classmethod
    def maximally_mixed(cls, dims):
        dims = tuple(dims) if np.iterable(dims) else (int(dims),)
        d = int(np.prod(dims))
        check_dim(d)
        return cls(np.eye(d) / d, dims)

    @classmethod
    def basis(cls, index, dims):
        dims = tuple(dims) if np.iterable(dims) else (int(dims),)
        check_dim(int(np.prod(dims)))
        return PureState.basis(index, dims).density()

    def eigenvalues(self):
        """Eigenvalues in descending order."""
        return np.linalg.eigvalsh(self.mat)[::-1]


class PureState:
    """Unit-norm state vector with a subsystem layout."""

    __slots__ = ("vec", "dims")

    def __init__(self, vec, dims=None, normalize=False):
        arr = np.array(vec, dtype=complex).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise ValueError("state vector contains NaN or Inf entries")
        check_dim(arr.size)
        dims = _resolve_dims(dims, arr.size)
        norm = np.linalg.norm(arr)
        if normalize:
            if norm == 0:
                raise ValueError("cannot normalise the zero vector")
            arr = arr / norm
        elif abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state vector has norm {norm!r}, expected 1")
        object.__setattr__(self, "vec", _freeze(arr))
        object.__setattr__(self, "dims", dims)

    def __setattr__(self, name, value):
        raise AttributeError("PureState is immutable")

    @property
    def dim(self):
        return self.vec.size

    def __repr__(self):
        return f"PureState(dims={self.dims})"

    @classmethod
    def basis(cls, index, dims):
        dims = tuple(dims) if np.iterable(dims) else (int(dims),)
        vec = np.zeros(int(np.prod(dims)), dtype=complex)
        if not np.iterable(index):
            vec[int(index)] = 1.0
        else:
            vec[np.ravel_multi_index(tuple(index), dims)] = 1.0
        return cls(vec, dims)

    def density(self):
        return DensityMatrix(np.outer(self.vec, self.vec.conj()), self.dims,
                             validate=False)


class UnitaryMatrix:
    """Square matrix with U^dagger U = I to within ``UNITARY_TOL``."""

    __slots__ = ("mat", "dims")

    def __init__(self, mat, dims=None):
        arr = _as_matrix(mat)
        check_dim(arr.shape[0], "operator")
        dev = np.max(np.abs(arr.conj().T @ arr - np.eye(arr.shape[0])))
        if dev > UNITARY_TOL:
            raise ValueError(f"matrix is not unitary (deviation {dev:.3e})")
        object.__setattr__(self, "mat", _freeze(arr))
        object.__setattr__(self, "dims", _resolve_dims(dims, arr.shape[0]))

    def __setattr__(self, name, value):
        raise AttributeError("UnitaryMatrix is immutable")

    @property
    def dim(self):
        return self.mat.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.mat if dtype is None else self.mat.astype(dtype)

    def __repr__(self):
        return f"UnitaryMatrix(dims={self.dims})"


class KrausSet:
    """Complete family of d x d Kraus operators, sum A^dagger A = I."""

    __slots__ = ("ops", "d")

    def __init__(self, ops):
        mats = tuple(_freeze(_as_matrix(op)) for op in ops)
        if not mats:
            raise ValueError("a Kraus set needs at least one operator")
        d = mats[0].shape[0]
        if any(m.shape != (d, d) for m in mats):
            raise ValueError("all Kraus operators must share one square shape")
        dev = np.max(np.abs(sum(m.conj().T @ m for m in mats) - np.eye(d)))
        if dev > UNITARY_TOL:
            raise ValueError(f"Kraus operators are not complete (deviation {dev:.3e})")
        object.__setattr__(self, "ops", mats)
        object.__setattr__(self, "d", d)

    def __setattr__(self, name, value):
        raise AttributeError("KrausSet is immutable")

    def __len__(self):
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)


# -- raw array helpers ------------------------------------------------------

def kron_all(mats):
    return reduce(np.kron, mats)


def ptrace_array(mat, dims, keep):
    """Partial trace of a raw square array, keeping ``keep`` in order."""
    dims = tuple(dims)
    keep = sorted(keep)
    n = len(dims)
    t = np.asarray(mat).reshape(dims + dims)
    ket = list(range(n))
    bra = [i + n if i in keep else i for i in range(n)]
    out = keep + [i + n for i in keep]
    t = np.einsum(t, ket + bra, out)
    d = int(np.prod([dims[i] for i in keep]))
    return t.reshape(d, d)


def entropy_of_spectrum(eigs):
    lam = np.asarray(eigs, dtype=float)
    lam = lam[lam > EIG_CUTOFF]
    return float(max(0.0, -np.sum(lam * np.log2(lam))))


def entropy_array(mat):
    """Entropy in bits of a raw Hermitian array (symmetrised first)."""
    mat = np.asarray(mat)
    return entropy_of_spectrum(np.linalg.eigvalsh((mat + mat.conj().T) / 2))


# -- operations -------------------------------------------------------------

def tensor(a, b):
    """Kronecker product of two objects of the same kind."""
    if type(a) is not type(b):
        raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")
    if isinstance(a, DensityMatrix):
        return DensityMatrix(np.kron(a.mat, b.mat), a.dims + b.dims, validate=False)
    if isinstance(a, PureState):
        return PureState(np.kron(a.vec, b.vec), a.dims + b.dims, normalize=True)
    if isinstance(a, UnitaryMatrix):
        return UnitaryMatrix(np.kron(a.mat, b.mat), a.dims + b.dims)
    raise TypeError(f"unsupported type {type(a).__name__}")


def tensor_all(items):
    return reduce(tensor, items)


def partial_trace(rho: DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    """Reduced state on the subsystems listed in ``keep``.

    The kept subsystems appear in their original order whatever the order
    of ``keep``.
    """
    keep = list(keep)
    n = len(rho.dims)
    if len(set(keep)) != len(keep) or any(not 0 <= k < n for k in keep):
        raise IndexError(f"invalid subsystem indices {keep} for dims {rho.dims}")
    keep = sorted(keep)
    if keep == list(range(n)):
        return rho
    out = ptrace_array(rho.mat, rho.dims, keep)
    return DensityMatrix.from_hermitian(out, [rho.dims[i] for i in keep])


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """S(rho) = -sum lambda log2 lambda, ignoring eigenvalues below 1e-12."""
    return entropy_of_spectrum(np.linalg.eigvalsh(rho.mat))


def binary_entropy(F: float) -> float:
    if not 0.0 <= F <= 1.0:
        raise ValueError(f"binary entropy needs an argument in [0, 1], got {F}")
    if F == 0.0 or F == 1.0:
        return 0.0
    return float(-F * np.log2(F) - (1 - F) * np.log2(1 - F))


def apply_kraus(kraus: KrausSet, rho: DensityMatrix) -> DensityMatrix:
    if not isinstance(kraus, KrausSet):
        kraus = KrausSet(kraus)
    if kraus.d != rho.dim:
        raise ValueError(f"Kraus dimension {kraus.d} does not match state dimension {rho.dim}")
    out = sum(A @ rho.mat @ A.conj().T for A in kraus.ops)
    return DensityMatrix.from_hermitian(out, rho.dims)


def eigh_descending(mat):
    """Eigen-decomposition sorted by descending eigenvalue, with phases fixed.

    Each eigenvector is rotated so that its first component of magnitude
    above 1e-12 is real and positive.  Ties keep numpy's order.
    """
    w, v = np.linalg.eigh(mat)
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    for col in range(v.shape[1]):
        nz = np.flatnonzero(np.abs(v[:, col]) > EIG_CUTOFF)
        if nz.size:
            c = v[nz[0], col]
            v[:, col] *= np.conj(c) / abs(c)
    return w, v


def purify(rho: DensityMatrix) -> PureState:
    """Purification |psi_QR> with reference dimension equal to rank(rho).

    The reference subsystem is appended after the subsystems of ``rho``.
    """
    w, v = eigh_descending(rho.mat)
    r = max(1, int(np.sum(w > EIG_CUTOFF)))
    amps = np.sqrt(np.clip(w[:r], 0.0, None))
    psi = (v[:, :r] * amps).reshape(-1)
    return PureState(psi, rho.dims + (r,), normalize=True)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return trace_distance_array(a.mat, b.mat)


def trace_distance_array(a, b):
    diff = np.asarray(a) - np.asarray(b)
    diff = (diff + diff.conj().T) / 2
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def fidelity_with_pure(psi: PureState, rho: DensityMatrix) -> float:
    """<psi| rho |psi>, clipped to [0, 1]."""
    val = np.vdot(psi.vec, rho.mat @ psi.vec).real
    return float(min(1.0, max(0.0, val)))


# -- standard matrices and random objects -----------------------------------

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULIS = (I2, X, Y, Z)


def weyl_operators(d):
    """The d^2 clock-and-shift unitaries X^a Z^b (Paulis up to phase for d = 2)."""
    if d == 2:
        return list(PAULIS)
    omega = np.exp(2j * np.pi / d)
    shift = np.roll(np.eye(d), 1, axis=0)
    clock = np.diag(omega ** np.arange(d))
    return [np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b)
            for a in range(d) for b in range(d)]


def bell_state():
    return PureState(np.array([1, 0, 0, 1]) / np.sqrt(2), (2, 2))


def random_pure_state(d, rng, dims=None):
    vec = rng.normal(size=d) + 1j * rng.normal(size=d)
    return PureState(vec, dims, normalize=True)


def random_density_matrix(d, rng, rank=None, dims=None):
    """Random state from a d x rank Ginibre matrix (full rank by default)."""
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return DensityMatrix.from_hermitian(rho / np.trace(rho).real, dims)


def random_unitary(d, rng):
    """Haar-random unitary via QR of a Ginibre matrix."""
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph
