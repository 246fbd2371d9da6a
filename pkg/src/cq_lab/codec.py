"""Random codebooks and the sequentially orthogonalized von Neumann decoder.

The decoder parts are built in codeword order by a Gram-Schmidt-style
deflation: each typical basis vector is pushed through the front projector,
deflated against the span of all earlier parts, and the residual batch is
orthonormalized with a relative rank cut.  The construction order is load
bearing: the error analysis of part i conditions on the accumulated span of
parts 1..i-1.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, ValidationError
from .quantum_core import (
    DEFAULT_MAX_DIM,
    RANK_TOL,
    DensityMatrix,
    Subspace,
    kron_power,
    orthonormal_range,
    spectral_decomposition,
)
from .rng import stream
from .typicality import ZERO_EIGENVALUE_CLAMP, ProductSpectral

POVM_ORTHOGONALITY_TOL = 1e-8


def message_count(n: int, rate: float) -> int:
    """M = max(1, ceil(2^(n R))), nudged so exact powers of two stay exact."""
    return max(1, math.ceil(2.0 ** (n * rate) - 1e-9))


@dataclass(frozen=True)
class Codebook:
    """M random index sequences over {1..num_symbols}, plus their provenance."""

    n: int
    rate: float
    num_messages: int
    num_symbols: int
    codewords: np.ndarray = field(repr=False)
    seed: int

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=np.int64)
        if cw.shape != (self.num_messages, self.n):
            raise ValidationError(
                f"codeword array shape {cw.shape} does not match "
                f"(M={self.num_messages}, n={self.n})"
            )
        if cw.size and (cw.min() < 1 or cw.max() > self.num_symbols):
            raise ValidationError(
                f"codeword symbols must lie in 1..{self.num_symbols}"
            )
        if self.num_messages != message_count(self.n, self.rate):
            raise ValidationError(
                f"message count {self.num_messages} does not equal "
                f"max(1, ceil(2^(n R))) = {message_count(self.n, self.rate)}"
            )
        cw.flags.writeable = False
        object.__setattr__(self, "codewords", cw)

    def codeword(self, message: int) -> np.ndarray:
        if not 1 <= message <= self.num_messages:
            raise ValidationError(
                f"message {message} out of range 1..{self.num_messages}"
            )
        return self.codewords[message - 1]


def generate_codebook(prior, n: int, rate: float, seed: int) -> Codebook:
    """Draw M codewords i.i.d. from the prior on a dedicated Philox stream."""
    if rate <= 0:
        raise ValidationError(f"rate must be positive, got {rate}")
    p = np.asarray(prior, dtype=np.float64)
    m = message_count(n, rate)
    rng = stream(seed, "codebook-symbols")
    draws = rng.choice(p.size, size=(m, n), p=p / p.sum()) + 1
    return Codebook(
        n=n,
        rate=rate,
        num_messages=m,
        num_symbols=p.size,
        codewords=draws,
        seed=seed,
    )


class ProductState:
    """Tensor-product output state with per-symbol spectral data.

    The dense d^n representation is materialized lazily and cached; hot paths
    use the square-root column factorization G with rho = G G^dag instead.
    """

    __slots__ = ("factors", "spectral", "_dense", "_sqrt_columns")

    def __init__(self, factors, spectral: ProductSpectral | None = None):
        factors = tuple(factors)
        if not factors:
            raise ValidationError("a product state needs at least one factor")
        for f in factors:
            if not isinstance(f, DensityMatrix):
                raise ValidationError("factors must be DensityMatrix instances")
            if f.dim != factors[0].dim:
                raise DimensionMismatchError(
                    f"factor dimensions disagree: {f.dim} vs {factors[0].dim}"
                )
        self.factors = factors
        if spectral is None:
            spectral = ProductSpectral([spectral_decomposition(f) for f in factors])
        if spectral.n != len(factors) or spectral.symbol_dim != factors[0].dim:
            raise ValidationError("spectral data does not match the factors")
        self.spectral = spectral
        self._dense = None
        self._sqrt_columns = None

    @property
    def n(self) -> int:
        return len(self.factors)

    @property
    def dim(self) -> int:
        return self.factors[0].dim ** len(self.factors)

    def to_dense(self, max_dim: int = DEFAULT_MAX_DIM) -> DensityMatrix:
        if self._dense is None:
            out = np.ones((1, 1), dtype=np.complex128)
            for f in self.factors:
                out = np.kron(out, f.entries)
            if out.shape[0] > max_dim:
                # kron_power path exists only for its cap error message
                kron_power(self.factors[0].entries, self.n, max_dim)
            self._dense = DensityMatrix(out)
        return self._dense

    def sqrt_columns(self) -> np.ndarray:
        """D x r matrix G with G G^dag = rho, columns scaled product eigenvectors."""
        if self._sqrt_columns is None:
            logs = self.spectral.log2_eigenvalues()
            selected = np.flatnonzero(logs > -np.inf)
            cols = self.spectral.basis_columns(selected)
            weights = np.sqrt(np.exp2(logs[selected]))
            self._sqrt_columns = cols * weights[None, :]
            self._sqrt_columns.flags.writeable = False
        return self._sqrt_columns

    def apply_to(self, vectors: np.ndarray) -> np.ndarray:
        """Apply the product operator to columns without densifying."""
        vectors = np.asarray(vectors, dtype=np.complex128)
        d = self.factors[0].dim
        n = self.n
        cols = vectors.shape[1] if vectors.ndim == 2 else 1
        t = vectors.reshape((d,) * n + (cols,))
        for axis, f in enumerate(self.factors):
            t = np.moveaxis(np.tensordot(f.entries, t, axes=(1, axis)), 0, axis)
        return t.reshape(d**n, cols)

    def __repr__(self):
        return f"ProductState(n={self.n}, symbol_dim={self.factors[0].dim})"


def quantum_codeword(codebook: Codebook, message: int, outputs) -> ProductState:
    """Tensor product of per-symbol channel outputs selected by the codeword."""
    outputs = tuple(outputs)
    if len(outputs) < codebook.num_symbols:
        raise ValidationError(
            f"need {codebook.num_symbols} output states, got {len(outputs)}"
        )
    word = codebook.codeword(message)
    decompositions = [spectral_decomposition(o) for o in outputs]
    factors = [outputs[s - 1] for s in word]
    spectral = ProductSpectral([decompositions[s - 1] for s in word])
    return ProductState(factors, spectral)


def expected_codeword_state(prior, outputs, n: int, max_dim: int = DEFAULT_MAX_DIM) -> DensityMatrix:
    """Codebook average of the quantum codewords: exactly rho^(x n) for
    rho = sum_i p_i rho_i, by induction on the block length."""
    p = np.asarray(prior, dtype=np.float64)
    outputs = tuple(outputs)
    mixed = sum(pi * o.entries for pi, o in zip(p, outputs))
    return DensityMatrix(kron_power(mixed, n, max_dim))


class SequentialPOVM:
    """Ordered mutually orthogonal decoder parts plus the error complement.

    ``padding`` holds zero-rank parts appended after the error part so the
    bisection cascade sees a power-of-two leaf count; it is empty for freshly
    built decoders.
    """

    __slots__ = ("parts", "error_part", "ambient_dim", "padding")

    def __init__(self, parts, error_part: Subspace, padding=(), *, validate: bool = True):
        parts = tuple(parts)
        padding = tuple(padding)
        dim = error_part.ambient_dim
        for sub in parts + padding:
            if sub.ambient_dim != dim:
                raise DimensionMismatchError(
                    f"POVM parts disagree in ambient dimension: {sub.ambient_dim} vs {dim}"
                )
        if validate:
            stacked = np.hstack([s.basis for s in parts + (error_part,)])
            total_rank = stacked.shape[1]
            if total_rank != dim:
                raise ValidationError(
                    f"POVM ranks sum to {total_rank}, expected ambient dimension {dim}"
                )
            gram = stacked.conj().T @ stacked
            dev = float(np.max(np.abs(gram - np.eye(total_rank))))
            if dev > POVM_ORTHOGONALITY_TOL:
                raise ValidationError(
                    f"POVM parts are not mutually orthonormal: deviation {dev:.3e}"
                )
        self.parts = parts
        self.error_part = error_part
        self.ambient_dim = dim
        self.padding = padding

    @property
    def num_messages(self) -> int:
        return len(self.parts)

    def leaves(self) -> tuple:
        """Measurement outcomes in bisection order: parts, error, padding."""
        return self.parts + (self.error_part,) + self.padding

    def __repr__(self):
        return (
            f"SequentialPOVM(messages={len(self.parts)}, "
            f"ambient_dim={self.ambient_dim}, padding={len(self.padding)})"
        )


def _deflate(columns: np.ndarray, accumulated: np.ndarray | None) -> np.ndarray:
    """Remove components along the accumulated orthonormal columns (twice)."""
    if accumulated is None or accumulated.shape[1] == 0:
        return columns
    for _ in range(2):
        columns = columns - accumulated @ (accumulated.conj().T @ columns)
    return columns


def sequential_parts(apply_front, typical_bases, ambient_dim: int):
    """Shared deflation workhorse for the single-channel and compound decoders.

    ``apply_front`` maps a column batch through the front operator (a
    projector, or a product of projections for the compound decoder).
    Returns (parts, error_part), each column-orthonormal, mutually orthogonal,
    and jointly complete.
    """
    accumulated = np.zeros((ambient_dim, 0), dtype=np.complex128)
    parts = []
    for basis in typical_bases:
        if basis.shape[1] == 0:
            parts.append(Subspace.zero(ambient_dim))
            continue
        pushed = apply_front(basis)
        residual = _deflate(pushed, accumulated)
        # inputs are unit vectors, so the absolute floor kills batches that
        # consist of cancellation noise only (e.g. repeated codewords)
        new_basis = orthonormal_range(residual, RANK_TOL, abs_tol=RANK_TOL)
        parts.append(Subspace(new_basis, validate=False))
        if new_basis.shape[1]:
            accumulated = np.hstack([accumulated, new_basis])
    error_part = Subspace(accumulated, validate=False).complement()
    return parts, error_part


def build_sequential_povm(
    codebook: Codebook,
    front: Subspace,
    typical_subspaces,
) -> SequentialPOVM:
    """Orthogonalize the conditional typical subspaces behind the front projector.

    Part i is the span of the deflated images of the i-th typical basis; the
    error part completes the space.  All parts lie inside the front range, so
    they commute with the front projector.
    """
    typical_subspaces = tuple(typical_subspaces)
    if len(typical_subspaces) != codebook.num_messages:
        raise ValidationError(
            f"need one typical subspace per message: got {len(typical_subspaces)} "
            f"for M={codebook.num_messages}"
        )
    dim = front.ambient_dim
    for sub in typical_subspaces:
        if sub.ambient_dim != dim:
            raise DimensionMismatchError(
                f"typical subspace ambient dimension {sub.ambient_dim} "
                f"does not match front dimension {dim}"
            )
    parts, error_part = sequential_parts(
        front.apply, [s.basis for s in typical_subspaces], dim
    )
    return SequentialPOVM(parts, error_part, validate=False)


def proj_lem_bound(
    povm: SequentialPOVM,
    message: int,
    state: ProductState,
    typical: Subspace,
    front: Subspace,
) -> tuple[float, float]:
    """Lower bound on the decoder's success trace for one codeword.

    Returns (lhs, rhs) with
    lhs = Tr(part_i rho part_i) and
    rhs = (Tr(front rho~ front) - Tr(prior-parts front rho~ front prior-parts))^2,
    where rho~ is the state projected into its own typical subspace and the
    inner difference is clamped at zero.  The contract is lhs >= rhs - 1e-8.
    """
    if not 1 <= message <= povm.num_messages:
        raise ValidationError(
            f"message {message} out of range 1..{povm.num_messages}"
        )
    g = state.sqrt_columns()
    lhs = float(np.linalg.norm(povm.parts[message - 1].basis.conj().T @ g) ** 2)
    g_typ = typical.apply(g)
    t_front = float(np.linalg.norm(front.basis.conj().T @ g_typ) ** 2)
    front_g = front.apply(g_typ)
    prior = [p.basis for p in povm.parts[: message - 1] if p.rank]
    if prior:
        stacked = np.hstack(prior)
        t_prior = float(np.linalg.norm(stacked.conj().T @ front_g) ** 2)
    else:
        t_prior = 0.0
    inner = max(t_front - t_prior, 0.0)
    return lhs, inner**2
