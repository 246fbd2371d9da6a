"""Dense Hermitian linear algebra, entropies, channels, and the projector lattice.

Operators are dense complex matrices on C^D.  Projectors are never stored as
dense D x D matrices: a rank-r projector is represented by a column-orthonormal
isometry (:class:`Subspace`), so all trace formulas route through V^dag A V.
All entropies and exponents are base 2 (bits).

Every value is immutable after construction (backing arrays are marked
read-only) and safe to share across threads.
"""

import math
from typing import Union

import numpy as np
import scipy.linalg

from .errors import CapacityError, DimensionMismatchError, ValidationError

HERMITIAN_TOL = 1e-10
EIGENVALUE_FLOOR = -1e-10
TRACE_TOL = 1e-10
ORTHONORMAL_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-8
PRIOR_SUM_TOL = 1e-12
SUPPORT_TOL = 1e-12
RANK_TOL = 1e-10
TIE_GAP = 1e-9
DEFAULT_MAX_DIM = 4096


def _freeze(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


class HermitianOperator:
    """Dense complex Hermitian operator on C^D."""

    __slots__ = ("entries", "dim")

    def __init__(self, entries):
        m = np.array(entries, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"operator must be square, got shape {m.shape}")
        deviation = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
        if deviation > HERMITIAN_TOL:
            raise ValidationError(
                f"operator is not Hermitian: max deviation {deviation:.3e} "
                f"exceeds tolerance {HERMITIAN_TOL:.0e}"
            )
        self.entries = _freeze(m)
        self.dim = m.shape[0]

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class DensityMatrix(HermitianOperator):
    """Hermitian operator with unit trace and nonnegative spectrum."""

    __slots__ = ()

    def __init__(self, entries):
        super().__init__(entries)
        trace = float(self.entries.trace().real)
        if abs(trace - 1.0) > TRACE_TOL:
            raise ValidationError(
                f"density matrix trace {trace!r} deviates from 1 by more than {TRACE_TOL:.0e}"
            )
        smallest = float(np.linalg.eigvalsh(self.entries)[0]) if self.dim else 0.0
        if smallest < EIGENVALUE_FLOOR:
            raise ValidationError(
                f"density matrix has eigenvalue {smallest:.3e} below floor {EIGENVALUE_FLOOR:.0e}"
            )


class SpectralDecomposition:
    """Eigenvalues in descending order with matching orthonormal eigenvectors.

    ``eigenvectors[:, k]`` is the unit eigenvector for ``eigenvalues[k]``.
    Within a degenerate cluster the ordering is made deterministic by
    :func:`spectral_decomposition`.
    """

    __slots__ = ("eigenvalues", "eigenvectors", "dim")

    def __init__(self, eigenvalues, eigenvectors, *, operator=None):
        w = np.array(eigenvalues, dtype=np.float64)
        v = np.array(eigenvectors, dtype=np.complex128)
        if w.ndim != 1 or v.ndim != 2 or v.shape != (w.size, w.size):
            raise ValidationError(
                f"inconsistent spectral data: {w.size} eigenvalues, eigenvector shape {v.shape}"
            )
        if w.size > 1 and np.any(np.diff(w) > 0):
            raise ValidationError("eigenvalues must be sorted in descending order")
        gram = v.conj().T @ v
        ortho_dev = float(np.max(np.abs(gram - np.eye(w.size)))) if w.size else 0.0
        if ortho_dev > ORTHONORMAL_TOL:
            raise ValidationError(
                f"eigenvectors are not orthonormal: deviation {ortho_dev:.3e}"
            )
        if operator is not None:
            rebuilt = (v * w) @ v.conj().T
            err = float(np.linalg.norm(rebuilt - operator.entries, ord=2))
            if err > RECONSTRUCTION_TOL:
                raise ValidationError(
                    f"spectral reconstruction error {err:.3e} exceeds {RECONSTRUCTION_TOL:.0e}"
                )
        self.eigenvalues = _freeze(w)
        self.eigenvectors = _freeze(v)
        self.dim = w.size

    def __repr__(self):
        return f"SpectralDecomposition(dim={self.dim})"


class Subspace:
    """Column-orthonormal isometry representing an orthogonal projector by its range.

    A rank-r subspace of C^D stores a D x r basis V with V^dag V = I; the
    induced projector is V V^dag but is never materialized on hot paths.
    """

    __slots__ = ("basis", "ambient_dim", "rank")

    def __init__(self, basis, *, validate: bool = True):
        v = np.array(basis, dtype=np.complex128)
        if v.ndim != 2:
            raise ValidationError(f"subspace basis must be 2-d, got shape {v.shape}")
        if validate and v.shape[1] > 0:
            gram = v.conj().T @ v
            dev = float(np.max(np.abs(gram - np.eye(v.shape[1]))))
            if dev > ORTHONORMAL_TOL:
                raise ValidationError(
                    f"subspace basis is not orthonormal: deviation {dev:.3e} "
                    f"exceeds {ORTHONORMAL_TOL:.0e}"
                )
        self.basis = _freeze(v)
        self.ambient_dim = v.shape[0]
        self.rank = v.shape[1]

    @classmethod
    def full(cls, dim: int) -> "Subspace":
        return cls(np.eye(dim, dtype=np.complex128), validate=False)

    @classmethod
    def zero(cls, dim: int) -> "Subspace":
        return cls(np.zeros((dim, 0), dtype=np.complex128), validate=False)

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        """Project columns onto the range: V (V^dag x)."""
        if self.rank == 0:
            return np.zeros_like(np.asarray(vectors, dtype=np.complex128))
        return self.basis @ (self.basis.conj().T @ vectors)

    def apply_complement(self, vectors: np.ndarray) -> np.ndarray:
        """Project columns onto the orthogonal complement of the range."""
        vectors = np.asarray(vectors, dtype=np.complex128)
        if self.rank == 0:
            return vectors.copy()
        return vectors - self.basis @ (self.basis.conj().T @ vectors)

    def complement(self) -> "Subspace":
        """Orthonormal basis of the orthogonal complement of the range."""
        if self.rank == 0:
            return Subspace.full(self.ambient_dim)
        if self.rank == self.ambient_dim:
            return Subspace.zero(self.ambient_dim)
        u, _, _ = np.linalg.svd(self.basis, full_matrices=True)
        return Subspace(u[:, self.rank :], validate=False)

    def projector(self) -> np.ndarray:
        """Dense D x D projector; intended for small dimensions only."""
        return self.basis @ self.basis.conj().T

    def contains(self, other: "Subspace", tol: float = 1e-8) -> bool:
        """True when the other range lies inside this one (projection residual <= tol)."""
        if other.rank == 0:
            return True
        residual = other.basis - self.apply(other.basis)
        return float(np.max(np.abs(residual))) <= tol

    def __repr__(self):
        return f"Subspace(ambient_dim={self.ambient_dim}, rank={self.rank})"


class QuantumChannel:
    """Completely positive trace-preserving map in Kraus form."""

    __slots__ = ("kraus_ops", "in_dim", "out_dim")

    def __init__(self, kraus_ops):
        ops = tuple(np.array(k, dtype=np.complex128) for k in kraus_ops)
        if not ops:
            raise ValidationError("a channel needs at least one Kraus operator")
        out_dim, in_dim = ops[0].shape
        for k in ops:
            if k.shape != (out_dim, in_dim):
                raise ValidationError(
                    f"Kraus operators disagree in shape: {k.shape} vs {(out_dim, in_dim)}"
                )
        total = sum(k.conj().T @ k for k in ops)
        dev = float(np.max(np.abs(total - np.eye(in_dim))))
        if dev > HERMITIAN_TOL:
            raise ValidationError(
                f"channel is not trace preserving: sum K^dag K deviates from I by {dev:.3e}"
            )
        self.kraus_ops = tuple(_freeze(k) for k in ops)
        self.in_dim = in_dim
        self.out_dim = out_dim

    @classmethod
    def identity(cls, dim: int) -> "QuantumChannel":
        return cls([np.eye(dim, dtype=np.complex128)])

    def __repr__(self):
        return f"QuantumChannel(in_dim={self.in_dim}, out_dim={self.out_dim}, kraus={len(self.kraus_ops)})"


class CqSource:
    """Classical-quantum source: states omega_1..omega_l with prior P."""

    __slots__ = ("states", "prior", "dim", "num_states")

    def __init__(self, states, prior):
        states = tuple(states)
        if not states:
            raise ValidationError("source needs at least one state")
        for s in states:
            if not isinstance(s, DensityMatrix):
                raise ValidationError("source states must be DensityMatrix instances")
            if s.dim != states[0].dim:
                raise DimensionMismatchError(
                    f"source states disagree in dimension: {s.dim} vs {states[0].dim}"
                )
        p = np.array(prior, dtype=np.float64)
        if p.ndim != 1 or p.size != len(states):
            raise ValidationError(
                f"prior length {p.size} does not match {len(states)} states"
            )
        if np.any(p < 0):
            raise ValidationError("prior entries must be nonnegative")
        if abs(float(p.sum()) - 1.0) > PRIOR_SUM_TOL:
            raise ValidationError(
                f"prior sums to {float(p.sum())!r}, deviating from 1 beyond {PRIOR_SUM_TOL:.0e}"
            )
        self.states = states
        self.prior = _freeze(p)
        self.dim = states[0].dim
        self.num_states = len(states)

    def mixture(self) -> DensityMatrix:
        """The averaged state sum_i p_i omega_i."""
        mixed = sum(p * s.entries for p, s in zip(self.prior, self.states))
        return DensityMatrix(mixed)

    def __repr__(self):
        return f"CqSource(num_states={self.num_states}, dim={self.dim})"


class _InfiniteDivergence:
    """Tagged marker for an infinite relative entropy.

    Kept distinct from float('inf') so callers that minimize over channel
    pairs must handle exact discriminability explicitly.
    """

    __slots__ = ()

    def __repr__(self):
        return "INFINITE_DIVERGENCE"


INFINITE_DIVERGENCE = _InfiniteDivergence()


def _phase_normalize(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its first nonzero entry is real positive."""
    v = vectors.copy()
    for j in range(v.shape[1]):
        nonzero = np.flatnonzero(np.abs(v[:, j]) > 1e-12)
        if nonzero.size:
            pivot = v[nonzero[0], j]
            v[:, j] *= np.conj(pivot) / abs(pivot)
    return v


def spectral_decomposition(operator: HermitianOperator) -> SpectralDecomposition:
    """Eigendecomposition with descending eigenvalues and deterministic ties.

    Within a degenerate cluster (eigenvalue gap below ``TIE_GAP``) the
    phase-normalized eigenvectors are reordered lexicographically by the real
    parts of their entries, so repeated runs and permuted constructions give
    platform-stable spectral data.
    """
    if not isinstance(operator, HermitianOperator):
        operator = HermitianOperator(operator)
    w, v = np.linalg.eigh(operator.entries)
    w = w[::-1].copy()
    v = _phase_normalize(v[:, ::-1])
    start = 0
    for stop in range(1, w.size + 1):
        if stop < w.size and w[start] - w[stop] < TIE_GAP:
            continue
        if stop - start > 1:
            order = sorted(range(start, stop), key=lambda j: tuple(v[:, j].real))
            v[:, start:stop] = v[:, order]
        start = stop
    return SpectralDecomposition(w, v, operator=operator)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """S(rho) = -sum lambda log2 lambda in bits, with 0 log 0 = 0."""
    w = np.linalg.eigvalsh(rho.entries)
    w = w[w > SUPPORT_TOL]
    return max(float(-(w * np.log2(w)).sum()), 0.0)


def relative_entropy(rho: DensityMatrix, sigma: DensityMatrix):
    """D(rho||sigma) in bits, or INFINITE_DIVERGENCE when support escapes.

    Computed in the eigenbases of the two arguments.  The support test uses
    eigenvalue tolerance ``SUPPORT_TOL``.
    """
    if rho.dim != sigma.dim:
        raise DimensionMismatchError(
            f"relative entropy needs equal dimensions, got {rho.dim} and {sigma.dim}"
        )
    ws, vs = np.linalg.eigh(sigma.entries)
    overlap = np.real(np.einsum("ij,jk,ki->i", vs.conj().T, rho.entries, vs))
    escaped = float(overlap[ws <= SUPPORT_TOL].sum()) if np.any(ws <= SUPPORT_TOL) else 0.0
    if escaped > SUPPORT_TOL:
        return INFINITE_DIVERGENCE
    wr = np.linalg.eigvalsh(rho.entries)
    wr = wr[wr > SUPPORT_TOL]
    term_rho = float((wr * np.log2(wr)).sum())
    keep = ws > SUPPORT_TOL
    term_sigma = float((overlap[keep] * np.log2(ws[keep])).sum())
    return term_rho - term_sigma


def holevo_quantity(source: CqSource, channel: QuantumChannel) -> float:
    """chi = S(E(omega)) - sum_i p_i S(E(omega_i)) in bits, clamped at 0."""
    if channel.in_dim != source.dim:
        raise DimensionMismatchError(
            f"channel input dimension {channel.in_dim} does not match source dimension {source.dim}"
        )
    mixed_out = apply_channel(channel, source.mixture())
    chi = von_neumann_entropy(mixed_out)
    for p, omega in zip(source.prior, source.states):
        chi -= p * von_neumann_entropy(apply_channel(channel, omega))
    if chi < -1e-10:
        raise ValidationError(f"Holevo quantity {chi!r} is negative beyond tolerance")
    return max(chi, 0.0)


def apply_channel(channel: QuantumChannel, rho: DensityMatrix) -> DensityMatrix:
    """E(rho) = sum_k K_k rho K_k^dag."""
    if channel.in_dim != rho.dim:
        raise DimensionMismatchError(
            f"channel input dimension {channel.in_dim} does not match state dimension {rho.dim}"
        )
    out = np.zeros((channel.out_dim, channel.out_dim), dtype=np.complex128)
    for k in channel.kraus_ops:
        out += k @ rho.entries @ k.conj().T
    return DensityMatrix(out)


Operator = Union[HermitianOperator, DensityMatrix]


def tensor(a: Operator, b: Operator, max_dim: int = DEFAULT_MAX_DIM) -> Operator:
    """Kronecker product; density inputs give a density output."""
    out_dim = a.dim * b.dim
    if out_dim > max_dim:
        raise CapacityError(
            f"tensor output dimension {out_dim} exceeds the configured cap {max_dim}"
        )
    product = np.kron(a.entries, b.entries)
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        return DensityMatrix(product)
    return HermitianOperator(product)


def kron_power(matrix: np.ndarray, n: int, max_dim: int = DEFAULT_MAX_DIM) -> np.ndarray:
    """Dense n-fold Kronecker power of a raw matrix, cap-checked."""
    dim = matrix.shape[0] ** n
    if dim > max_dim:
        raise CapacityError(
            f"tensor power dimension {matrix.shape[0]}^{n} = {dim} exceeds the configured cap {max_dim}"
        )
    out = np.ones((1, 1), dtype=np.complex128)
    for _ in range(n):
        out = np.kron(out, matrix)
    return out


def meet(first: Subspace, second: Subspace) -> Subspace:
    """Intersection of two ranges (the lattice operation P1 ^ P2).

    Computed as the orthogonal complement of the span of the two complement
    bases, with a relative singular-value cut at ``RANK_TOL``.
    """
    if first.ambient_dim != second.ambient_dim:
        raise DimensionMismatchError(
            f"meet needs equal ambient dimensions, got {first.ambient_dim} and {second.ambient_dim}"
        )
    dim = first.ambient_dim
    stacked = np.hstack([first.complement().basis, second.complement().basis])
    if stacked.shape[1] == 0:
        return Subspace.full(dim)
    u, s = _svd(stacked, full_matrices=True)
    rank = int(np.sum(s > RANK_TOL * s[0]))
    return Subspace(u[:, rank:], validate=False)


def project_trace(subspace: Subspace, operator: HermitianOperator) -> float:
    """Tr(P A P) evaluated as Tr(V^dag A V) through the isometry."""
    if subspace.ambient_dim != operator.dim:
        raise DimensionMismatchError(
            f"subspace ambient dimension {subspace.ambient_dim} does not match operator dimension {operator.dim}"
        )
    if subspace.rank == 0:
        return 0.0
    v = subspace.basis
    return float(np.real(np.einsum("ji,jk,ki->", v.conj(), operator.entries, v)))


def _svd(matrix: np.ndarray, full_matrices: bool) -> tuple[np.ndarray, np.ndarray]:
    """(U, s) of an SVD; falls back to the slower but robust gesvd driver when
    the default divide-and-conquer one fails to converge."""
    try:
        u, s, _ = np.linalg.svd(matrix, full_matrices=full_matrices)
    except np.linalg.LinAlgError:
        u, s, _ = scipy.linalg.svd(matrix, full_matrices=full_matrices, lapack_driver="gesvd")
    return u, s


def _left_singular(columns: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(columns, axis=0)
    peak = float(norms.max(initial=0.0))
    if peak == 0.0:
        return np.zeros((columns.shape[0], 0), dtype=np.complex128), np.zeros(0)
    # columns this small cannot survive any relative rank cut we use
    alive = columns[:, norms > 1e-14 * peak]
    if alive.shape[1] == 0:
        return np.zeros((columns.shape[0], 0), dtype=np.complex128), np.zeros(0)
    return _svd(alive, full_matrices=False)


def orthonormal_range(
    columns: np.ndarray, rel_tol: float = RANK_TOL, abs_tol: float = 0.0
) -> np.ndarray:
    """Orthonormal basis of the column span, cutting rank at rel_tol * s_max.

    ``abs_tol`` additionally floors the cut on an absolute scale; callers whose
    columns come from unit vectors pass it so a batch of pure cancellation
    noise yields rank zero instead of normalized noise.
    """
    if columns.shape[1] == 0:
        return columns.copy()
    u, s = _left_singular(columns)
    if s.size == 0 or s[0] <= 0.0:
        return np.zeros((columns.shape[0], 0), dtype=np.complex128)
    rank = int(np.sum(s > max(rel_tol * s[0], abs_tol)))
    return u[:, :rank]


def mixture_entropy_gap(prior: np.ndarray, states) -> float:
    """Average output entropy sum_j p_j S(rho_j) in bits."""
    return float(sum(p * von_neumann_entropy(s) for p, s in zip(prior, states)))


def binary_logarithm(value: float) -> float:
    """log2 with -inf for zero, used for log-domain probability windows."""
    return math.log2(value) if value > 0.0 else float("-inf")
