"""Typical sets, conditional typical projectors, and relative typicality.

Two probability windows coexist deliberately: frequency typicality of symbol
sequences uses the shrinking window delta / n^(1/4), while log-probability
windows for codewords and eigenvalue products use a fixed half-width.  Each
operation applies the window its definition calls for.

Symbol sequences and flat eigenvalue indices are 1-based at the public
boundary; internal digit arithmetic is 0-based.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DimensionMismatchError, SupportError, ValidationError
from .quantum_core import (
    DEFAULT_MAX_DIM,
    INFINITE_DIVERGENCE,
    DensityMatrix,
    SpectralDecomposition,
    Subspace,
    kron_power,
    meet,
    relative_entropy,
    spectral_decomposition,
)

ZERO_EIGENVALUE_CLAMP = 1e-12


@dataclass(frozen=True)
class TypicalSetParams:
    """Block length and the two window constants.

    ``delta`` drives frequency windows (scaled by n^(-1/4)) and eigenvalue
    windows; ``epsilon`` drives fixed log-probability windows and the
    relative-typicality test threshold.
    """

    n: int
    delta: float
    epsilon: float

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"block length must be >= 1, got {self.n}")
        if self.delta <= 0:
            raise ValidationError(f"delta must be positive, got {self.delta}")
        if self.epsilon <= 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def frequency_window(self) -> float:
        return self.delta / self.n**0.25


class ProductSpectral:
    """Per-symbol spectral data of a tensor-product state.

    The global eigenvalue of flat index k (1-based) is the product of the
    per-symbol eigenvalues selected by the mixed-radix digits of k-1, with the
    first tensor factor as the most significant digit; the global eigenvector
    is the matching Kronecker product.
    """

    __slots__ = ("per_symbol", "n", "symbol_dim", "_log_table")

    def __init__(self, per_symbol):
        per_symbol = tuple(per_symbol)
        if not per_symbol:
            raise ValidationError("a product needs at least one factor")
        for dec in per_symbol:
            if not isinstance(dec, SpectralDecomposition):
                raise ValidationError("factors must be SpectralDecomposition instances")
            if dec.dim != per_symbol[0].dim:
                raise DimensionMismatchError(
                    f"factor dimensions disagree: {dec.dim} vs {per_symbol[0].dim}"
                )
        self.per_symbol = per_symbol
        self.n = len(per_symbol)
        self.symbol_dim = per_symbol[0].dim
        table = np.empty((self.n, self.symbol_dim), dtype=np.float64)
        for i, dec in enumerate(per_symbol):
            lam = np.where(dec.eigenvalues > ZERO_EIGENVALUE_CLAMP, dec.eigenvalues, 0.0)
            with np.errstate(divide="ignore"):
                table[i] = np.where(lam > 0.0, np.log2(np.maximum(lam, 1e-300)), -np.inf)
        self._log_table = table
        self._log_table.flags.writeable = False

    @property
    def total_dim(self) -> int:
        return self.symbol_dim**self.n

    def log2_eigenvalues(self) -> np.ndarray:
        """All d^n log2 eigenvalue products, flat-indexed (0-based internally)."""
        total = np.zeros(1, dtype=np.float64)
        for row in self._log_table:
            total = (total[:, None] + row[None, :]).ravel()
        return total

    def log2_eigenvalue(self, flat_index: int) -> float:
        """log2 of the product eigenvalue at 1-based flat index."""
        if not 1 <= flat_index <= self.total_dim:
            raise ValidationError(
                f"eigenvalue index {flat_index} out of range 1..{self.total_dim}"
            )
        digits = _decode_digits(np.array([flat_index - 1]), self.symbol_dim, self.n)[:, 0]
        return float(sum(self._log_table[i, d] for i, d in enumerate(digits)))

    def basis_columns(self, flat_indices: np.ndarray) -> np.ndarray:
        """Kronecker-product eigenvectors for the given 0-based flat indices."""
        digits = _decode_digits(flat_indices, self.symbol_dim, self.n)
        count = flat_indices.size
        out = np.ones((1, count), dtype=np.complex128)
        for i, dec in enumerate(self.per_symbol):
            cols = dec.eigenvectors[:, digits[i]]
            out = (out[:, None, :] * cols[None, :, :]).reshape(-1, count)
        return out


def _decode_digits(flat_indices: np.ndarray, d: int, n: int) -> np.ndarray:
    """Mixed-radix digits (n, count), most significant digit first."""
    digits = np.empty((n, flat_indices.size), dtype=np.int64)
    rest = flat_indices.copy()
    for i in range(n - 1, -1, -1):
        digits[i] = rest % d
        rest //= d
    return digits


def _symbols_to_indices(sequence, alphabet: int) -> np.ndarray:
    arr = np.asarray(sequence, dtype=np.int64)
    if arr.ndim != 1:
        raise ValidationError(f"sequence must be 1-d, got shape {arr.shape}")
    if arr.size and (arr.min() < 1 or arr.max() > alphabet):
        bad = arr[(arr < 1) | (arr > alphabet)][0]
        raise ValidationError(f"symbol {bad} out of range 1..{alphabet}")
    return arr - 1


def _clamped_prob(prob) -> np.ndarray:
    p = np.asarray(prob, dtype=np.float64)
    return np.where(p > ZERO_EIGENVALUE_CLAMP, p, 0.0)


def is_p_typical(sequence, prob, params: TypicalSetParams) -> bool:
    """Frequency typicality: |N(a|x)/n - P(a)| <= delta / n^(1/4) for every a.

    Sequences containing a zero-probability symbol are never typical.
    """
    p = _clamped_prob(prob)
    x = _symbols_to_indices(sequence, p.size)
    if x.size != params.n:
        raise ValidationError(f"sequence length {x.size} does not match n={params.n}")
    counts = np.bincount(x, minlength=p.size).astype(np.float64)
    if np.any(counts[p == 0.0] > 0):
        return False
    return bool(np.all(np.abs(counts / params.n - p) <= params.frequency_window))


def is_eps_typical_codeword(sequence, prob, params: TypicalSetParams) -> bool:
    """Log-probability typicality: P^n(x) within 2^(-n(H(P) +/- epsilon))."""
    p = _clamped_prob(prob)
    x = _symbols_to_indices(sequence, p.size)
    if x.size != params.n:
        raise ValidationError(f"sequence length {x.size} does not match n={params.n}")
    picked = p[x]
    if np.any(picked == 0.0):
        return False
    log_prob = float(np.log2(picked).sum())
    positive = p[p > 0.0]
    entropy = float(-(positive * np.log2(positive)).sum())
    lo = -params.n * (entropy + params.epsilon)
    hi = -params.n * (entropy - params.epsilon)
    return lo <= log_prob <= hi


def typical_pair(
    sequence,
    eigen_index: int,
    prod: ProductSpectral,
    prob,
    s_bar: float,
    params: TypicalSetParams,
) -> bool:
    """Joint typicality of (codeword, eigenvalue index) in the log domain.

    True iff log2(P^n(x) * lambda_k) lies within
    -n (H(P) + s_bar +/- delta), where s_bar is the prior-weighted average
    output entropy.  A zero product eigenvalue is never typical.
    """
    p = _clamped_prob(prob)
    x = _symbols_to_indices(sequence, p.size)
    if x.size != params.n:
        raise ValidationError(f"sequence length {x.size} does not match n={params.n}")
    picked = p[x]
    log_lambda = prod.log2_eigenvalue(eigen_index)
    if np.any(picked == 0.0) or log_lambda == -np.inf:
        return False
    total = float(np.log2(picked).sum()) + log_lambda
    positive = p[p > 0.0]
    entropy = float(-(positive * np.log2(positive)).sum())
    lo = -params.n * (entropy + s_bar + params.delta)
    hi = -params.n * (entropy + s_bar - params.delta)
    return lo <= total <= hi


def _check_cap(total_dim: int, max_dim: int):
    if total_dim > max_dim:
        raise CapacityError(
            f"product dimension {total_dim} exceeds the configured cap {max_dim}"
        )


def conditional_typical_subspace(
    prod: ProductSpectral,
    s_bar: float,
    params: TypicalSetParams,
    max_dim: int = DEFAULT_MAX_DIM,
) -> Subspace:
    """Span of product eigenvectors whose log2 eigenvalue falls in the window
    -n (s_bar +/- delta).  Rank is bounded by 2^(n (s_bar + delta))."""
    _check_cap(prod.total_dim, max_dim)
    logs = prod.log2_eigenvalues()
    lo = -params.n * (s_bar + params.delta)
    hi = -params.n * (s_bar - params.delta)
    selected = np.flatnonzero((logs >= lo) & (logs <= hi))
    if selected.size == 0:
        return Subspace.zero(prod.total_dim)
    return Subspace(prod.basis_columns(selected), validate=False)


def universal_typical_subspace(
    rho: DensityMatrix,
    params: TypicalSetParams,
    max_dim: int = DEFAULT_MAX_DIM,
) -> Subspace:
    """Typical subspace of rho^(x n) built over rho's eigenbasis.

    Spanned by the product eigenvectors of the frequency-typical sequences of
    the eigenvalue distribution, so Tr(P rho^(x n) P) equals the classical
    typical-set mass.
    """
    dec = spectral_decomposition(rho)
    d = rho.dim
    n = params.n
    total = d**n
    _check_cap(total, max_dim)
    lam = np.where(dec.eigenvalues > ZERO_EIGENVALUE_CLAMP, dec.eigenvalues, 0.0)
    digits = _decode_digits(np.arange(total), d, n)
    window = params.frequency_window
    ok = np.ones(total, dtype=bool)
    for a in range(d):
        counts = (digits == a).sum(axis=0)
        ok &= np.abs(counts / n - lam[a]) <= window
        if lam[a] == 0.0:
            ok &= counts == 0
    selected = np.flatnonzero(ok)
    if selected.size == 0:
        return Subspace.zero(total)
    prod = ProductSpectral([dec] * n)
    return Subspace(prod.basis_columns(selected), validate=False)


def relative_typical_subspace(
    rho: DensityMatrix,
    sigma: DensityMatrix,
    params: TypicalSetParams,
    max_dim: int = DEFAULT_MAX_DIM,
) -> Subspace:
    """Projector jointly typical for rho and discriminating against sigma.

    The meet of the typical subspace of rho^(x n) with the Neyman-Pearson
    projector onto the nonnegative eigenspace of
    rho^(x n) - 2^(n (D(rho||sigma) - epsilon)) sigma^(x n).
    """
    if rho.dim != sigma.dim:
        raise DimensionMismatchError(
            f"states disagree in dimension: {rho.dim} vs {sigma.dim}"
        )
    divergence = relative_entropy(rho, sigma)
    if divergence is INFINITE_DIVERGENCE:
        raise SupportError(
            "relative entropy is infinite: the states are exactly discriminable, "
            "use the support projector of rho^(x n) instead of a typicality test"
        )
    _check_cap(rho.dim**params.n, max_dim)
    hat = universal_typical_subspace(rho, params, max_dim)
    rho_n = kron_power(rho.entries, params.n, max_dim)
    sigma_n = kron_power(sigma.entries, params.n, max_dim)
    threshold = 2.0 ** (params.n * (divergence - params.epsilon))
    w, v = np.linalg.eigh(rho_n - threshold * sigma_n)
    tilde = Subspace(v[:, w >= 0.0], validate=False)
    return meet(hat, tilde)
