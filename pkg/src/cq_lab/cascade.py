"""Two-outcome bisection decoding and the classical-channel embedding.

Instead of one measurement with M+1 outcomes, the decoder asks ceil(log2(M+1))
binary questions over aggregated projectors, halving the candidate interval
each time.  The product of the conditional branch probabilities telescopes to
the direct success probability, so nothing is lost by bisecting.

A discrete memoryless channel W(y|x) embeds as the diagonal states
rho_x = diag(W(.|x)); received classical sequences become basis product
states, and the quantum decoder then decodes classical messages.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, ValidationError
from .quantum_core import (
    DEFAULT_MAX_DIM,
    CqSource,
    DensityMatrix,
    QuantumChannel,
    Subspace,
    apply_channel,
    holevo_quantity,
    mixture_entropy_gap,
)
from .codec import ProductState, SequentialPOVM, generate_codebook, message_count
from .rng import child_seed, stream
from .simulator import ErrorExperimentResult, decoder_for_codebook
from .typicality import TypicalSetParams, universal_typical_subspace

STACK_ORTHONORMAL_TOL = 1e-8


@dataclass(frozen=True)
class AggregatedProjector:
    """Direct sum of consecutive decoder parts, indexed lo..hi (1-based)."""

    lo: int
    hi: int
    subspace: Subspace

    def __post_init__(self):
        if self.lo < 1 or self.hi < self.lo:
            raise ValidationError(f"invalid aggregation interval [{self.lo}, {self.hi}]")


def aggregate_parts(povm: SequentialPOVM, lo: int, hi: int, *, validate: bool = False) -> AggregatedProjector:
    """Stack the bases of leaves lo..hi into one aggregated projector."""
    leaves = povm.leaves()
    if hi > len(leaves):
        raise ValidationError(f"interval end {hi} exceeds leaf count {len(leaves)}")
    stacked = np.hstack([leaves[j - 1].basis for j in range(lo, hi + 1)])
    if validate and stacked.shape[1]:
        gram = stacked.conj().T @ stacked
        dev = float(np.max(np.abs(gram - np.eye(stacked.shape[1]))))
        if dev > STACK_ORTHONORMAL_TOL:
            raise ValidationError(
                f"stacked aggregation basis deviates from orthonormal by {dev:.3e}"
            )
    return AggregatedProjector(lo, hi, Subspace(stacked, validate=False))


def pad_povm(povm: SequentialPOVM) -> SequentialPOVM:
    """Append zero-rank parts after the error part up to a power-of-two leaf count.

    Zero parts carry no probability mass and can never be selected; the
    bisection tree over the padded leaves is then well formed.  Idempotent.
    """
    count = len(povm.leaves())
    target = 1
    while target < count:
        target *= 2
    if target == count:
        return povm
    padding = povm.padding + tuple(
        Subspace.zero(povm.ambient_dim) for _ in range(target - count)
    )
    return SequentialPOVM(povm.parts, povm.error_part, padding, validate=False)


def _collapse(current: np.ndarray, part: Subspace) -> tuple[np.ndarray, float]:
    """Project a dense state onto a part; returns (unnormalized state, mass)."""
    if part.rank == 0:
        return np.zeros_like(current), 0.0
    reduced = part.basis.conj().T @ current @ part.basis
    mass = float(np.clip(np.real(np.trace(reduced)), 0.0, 1.0))
    return part.basis @ reduced @ part.basis.conj().T, mass


def bisect_decode(
    povm: SequentialPOVM,
    rho: DensityMatrix,
    rng: np.random.Generator,
) -> tuple[int | None, list[int], int]:
    """Decode with ceil(log2(M+1)) two-outcome measurements.

    Each step measures {left half, right half} of the current leaf interval
    and collapses the state onto the observed half; the recorded bits spell
    the landed leaf in binary.  Returns (message index, or None when the walk
    lands on the error part or a zero pad; the bit transcript; and the number
    of binary measurements performed).
    """
    if povm.ambient_dim != rho.dim:
        raise DimensionMismatchError(
            f"POVM ambient dimension {povm.ambient_dim} does not match state dimension {rho.dim}"
        )
    leaves = povm.leaves()
    count = len(leaves)
    if count & (count - 1):
        raise ValidationError(
            f"bisection needs a power-of-two leaf count, got {count}; pad the decoder first"
        )
    current = rho.entries.copy()
    lo, hi = 1, count
    bits: list[int] = []
    while lo < hi:
        mid = (lo + hi) // 2
        left = aggregate_parts(povm, lo, mid)
        left_state, p_left = _collapse(current, left.subspace)
        take_left = bool(rng.random() < p_left)
        if take_left:
            bits.append(0)
            current, mass = left_state, p_left
            hi = mid
        else:
            bits.append(1)
            right = aggregate_parts(povm, mid + 1, hi)
            current, mass = _collapse(current, right.subspace)
            lo = mid + 1
        if mass <= 0:
            raise ValidationError("bisection branch carries no probability mass")
        current = current / mass
    message = lo if lo <= povm.num_messages else None
    return message, bits, len(bits)


def cascade_success_probability(povm: SequentialPOVM, index: int, rho: DensityMatrix) -> float:
    """Exact product of the conditional bisection probabilities along the path
    to leaf ``index``; telescopes to Tr(part_index rho part_index)."""
    padded = pad_povm(povm)
    leaves = padded.leaves()
    if not 1 <= index <= len(leaves):
        raise ValidationError(f"leaf index {index} out of range 1..{len(leaves)}")
    if povm.ambient_dim != rho.dim:
        raise DimensionMismatchError(
            f"POVM ambient dimension {povm.ambient_dim} does not match state dimension {rho.dim}"
        )
    current = rho.entries.copy()
    lo, hi = 1, len(leaves)
    product = 1.0
    while lo < hi:
        mid = (lo + hi) // 2
        if index <= mid:
            hi = mid
        else:
            lo = mid + 1
        half = aggregate_parts(padded, lo, hi)
        collapsed, mass = _collapse(current, half.subspace)
        previous = float(np.clip(np.real(np.trace(current)), 0.0, None))
        if previous <= 0.0 or mass <= 0.0:
            return 0.0
        product *= mass / previous
        current = collapsed
    return product


@dataclass(frozen=True)
class ClassicalDMC:
    """Row-stochastic transition matrix W(y|x) with an input prior."""

    transition: np.ndarray
    prior: np.ndarray

    def __post_init__(self):
        w = np.array(self.transition, dtype=np.float64)
        p = np.array(self.prior, dtype=np.float64)
        if w.ndim != 2:
            raise ValidationError(f"transition matrix must be 2-d, got shape {w.shape}")
        if np.any(w < 0):
            raise ValidationError("transition probabilities must be nonnegative")
        row_sums = w.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > 1e-12):
            bad = int(np.argmax(np.abs(row_sums - 1.0)))
            raise ValidationError(
                f"transition row {bad + 1} sums to {row_sums[bad]!r}, not 1"
            )
        if p.ndim != 1 or p.size != w.shape[0]:
            raise ValidationError(
                f"prior length {p.size} does not match {w.shape[0]} inputs"
            )
        if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-12:
            raise ValidationError("prior must be nonnegative and sum to 1")
        w.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "transition", w)
        object.__setattr__(self, "prior", p)

    @property
    def num_inputs(self) -> int:
        return self.transition.shape[0]

    @property
    def num_outputs(self) -> int:
        return self.transition.shape[1]


def embed_dmc(dmc: ClassicalDMC) -> tuple[CqSource, QuantumChannel]:
    """Represent the classical channel as diagonal states through an identity channel.

    The Holevo quantity of the embedding equals the classical mutual
    information I(P, W) at the same prior, so classical and quantum rates
    coincide on embedded instances.
    """
    states = [
        DensityMatrix(np.diag(row.astype(np.complex128)))
        for row in dmc.transition
    ]
    return CqSource(states, dmc.prior), QuantumChannel.identity(dmc.num_outputs)


def dmc_from_source(source: CqSource, tol: float = 1e-12) -> ClassicalDMC:
    """Inverse of the embedding: read W rows off diagonal source states."""
    rows = []
    for index, state in enumerate(source.states, start=1):
        off_diag = state.entries - np.diag(np.diag(state.entries))
        if float(np.max(np.abs(off_diag))) > tol:
            raise ValidationError(
                f"source state {index} is not diagonal; cannot interpret it as a channel row"
            )
        rows.append(np.real(np.diag(state.entries)))
    return ClassicalDMC(np.array(rows), source.prior)


def encode_output_sequence(sequence, dim: int) -> ProductState:
    """Basis product state for a received classical sequence (1-based symbols)."""
    factors = []
    for symbol in np.asarray(sequence, dtype=np.int64):
        if not 1 <= symbol <= dim:
            raise ValidationError(f"symbol {symbol} out of range 1..{dim}")
        matrix = np.zeros((dim, dim), dtype=np.complex128)
        matrix[symbol - 1, symbol - 1] = 1.0
        factors.append(DensityMatrix(matrix))
    return ProductState(factors)


@dataclass(frozen=True)
class ClassicalDecodeResult:
    """Outcome of decoding a classical channel through the quantum cascade."""

    experiment: ErrorExperimentResult
    n_measurements: int


def classical_decode_experiment(
    dmc: ClassicalDMC,
    n: int,
    rate: float,
    params: TypicalSetParams,
    trials: int,
    seed: int,
    max_dim: int = DEFAULT_MAX_DIM,
) -> ClassicalDecodeResult:
    """Sample classical transmissions and decode them with the bisection cascade.

    One codebook is drawn; each trial picks a uniform message, samples the
    channel outputs, encodes them as a basis product state, and bisect-decodes
    it.  Reports the sampled error rate and the (constant) number of binary
    measurements per decode.
    """
    if trials < 1:
        raise ValidationError("need at least one trial")
    source, channel = embed_dmc(dmc)
    chi = holevo_quantity(source, channel)
    outputs = list(source.states)
    s_bar = mixture_entropy_gap(source.prior, outputs)
    front = universal_typical_subspace(source.mixture(), params, max_dim)
    codebook = generate_codebook(
        dmc.prior, n, rate, child_seed(seed, "dmc-codebook")
    )
    _, _, povm = decoder_for_codebook(codebook, outputs, front, s_bar, params, max_dim)
    padded = pad_povm(povm)
    m = codebook.num_messages
    errors = 0
    measurements = 0
    for t in range(trials):
        message = int(stream(seed, "dmc-message", t).integers(1, m + 1))
        word = codebook.codeword(message)
        noise = stream(seed, "dmc-noise", t)
        received = [
            int(noise.choice(dmc.num_outputs, p=dmc.transition[symbol - 1])) + 1
            for symbol in word
        ]
        encoded = encode_output_sequence(received, dmc.num_outputs).to_dense(max_dim)
        decoded, _, measurements = bisect_decode(
            padded, encoded, stream(seed, "bisect", t)
        )
        if decoded != message:
            errors += 1
    p_err = errors / trials
    ci95 = 1.96 * (p_err * (1 - p_err) / trials) ** 0.5
    result = ErrorExperimentResult(
        n=n,
        rate=rate,
        trials=trials,
        codebook_samples=1,
        num_messages=m,
        p_err_mean=p_err,
        p_err_ci95=ci95,
        chi=chi,
        seed=seed,
    )
    return ClassicalDecodeResult(experiment=result, n_measurements=measurements)
