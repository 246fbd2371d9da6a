"""Born-rule measurement simulation and the error-probability experiment.

The experiment computes per-message error probabilities exactly through
traces; sampling exists only to validate the measurement simulator itself.
Codebook samples are independent trials on derived RNG streams, so any
execution order reproduces the sequential results.
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
    von_neumann_entropy,
)
from .codec import (
    ProductState,
    SequentialPOVM,
    build_sequential_povm,
    generate_codebook,
    message_count,
    quantum_codeword,
)
from .rng import child_seed, stream
from .typicality import (
    TypicalSetParams,
    conditional_typical_subspace,
    universal_typical_subspace,
)

PROBABILITY_SUM_TOL = 1e-8
POST_STATE_FLOOR = 1e-12


@dataclass(frozen=True)
class MeasurementOutcome:
    """One sampled decoder outcome: index 1..M+1, its Born probability, and
    the collapsed state (None when the probability is below the floor)."""

    outcome_index: int
    probability: float
    post_state: DensityMatrix | None


@dataclass(frozen=True)
class ErrorExperimentResult:
    n: int
    rate: float
    trials: int
    codebook_samples: int
    num_messages: int
    p_err_mean: float
    p_err_ci95: float
    chi: float
    seed: int

    def __post_init__(self):
        if not -1e-12 <= self.p_err_mean <= 1 + 1e-12:
            raise ValidationError(f"error probability {self.p_err_mean} outside [0, 1]")
        if self.p_err_ci95 < 0:
            raise ValidationError("confidence radius must be nonnegative")


def _part_probability(part: Subspace, rho: DensityMatrix) -> float:
    if part.rank == 0:
        return 0.0
    v = part.basis
    return float(np.real(np.einsum("ji,jk,ki->", v.conj(), rho.entries, v)))


def measure(povm: SequentialPOVM, rho: DensityMatrix, rng: np.random.Generator) -> MeasurementOutcome:
    """Sample one outcome of the sequential decoder on a dense state.

    Outcome i (1..M) selects decoder part i, outcome M+1 the error part; the
    post state is the normalized projection onto the selected part.
    """
    if povm.ambient_dim != rho.dim:
        raise DimensionMismatchError(
            f"POVM ambient dimension {povm.ambient_dim} does not match state dimension {rho.dim}"
        )
    outcomes = povm.parts + (povm.error_part,)
    probs = np.array([_part_probability(p, rho) for p in outcomes])
    total = float(probs.sum())
    if abs(total - 1.0) > PROBABILITY_SUM_TOL:
        raise ValidationError(
            f"outcome probabilities sum to {total!r}, deviating beyond {PROBABILITY_SUM_TOL:.0e}"
        )
    clipped = np.clip(probs, 0.0, None)
    index = int(rng.choice(probs.size, p=clipped / clipped.sum()))
    probability = float(probs[index])
    part = outcomes[index]
    if probability > POST_STATE_FLOOR and part.rank:
        reduced = part.basis.conj().T @ rho.entries @ part.basis
        post = DensityMatrix(part.basis @ reduced @ part.basis.conj().T / probability)
    else:
        post = None
    return MeasurementOutcome(outcome_index=index + 1, probability=probability, post_state=post)


def success_probability(povm: SequentialPOVM, message: int, state: ProductState) -> float:
    """Deterministic Tr(part_i rho_alpha part_i) via the isometry trace."""
    if not 1 <= message <= povm.num_messages:
        raise ValidationError(f"message {message} out of range 1..{povm.num_messages}")
    part = povm.parts[message - 1]
    if part.rank == 0:
        return 0.0
    g = state.sqrt_columns()
    return float(np.linalg.norm(part.basis.conj().T @ g) ** 2)


def decoder_for_codebook(
    codebook,
    outputs,
    front: Subspace,
    s_bar: float,
    params: TypicalSetParams,
    max_dim: int = DEFAULT_MAX_DIM,
):
    """Build the codeword states, their typical subspaces, and the decoder."""
    states = [
        quantum_codeword(codebook, i, outputs)
        for i in range(1, codebook.num_messages + 1)
    ]
    typical = [
        conditional_typical_subspace(st.spectral, s_bar, params, max_dim)
        for st in states
    ]
    povm = build_sequential_povm(codebook, front, typical)
    return states, typical, povm


def run_error_experiment(
    source: CqSource,
    channel: QuantumChannel,
    n: int,
    rate: float,
    params: TypicalSetParams,
    trials: int,
    codebook_samples: int,
    seed: int,
    max_dim: int = DEFAULT_MAX_DIM,
) -> ErrorExperimentResult:
    """Monte Carlo over codebooks of the exact per-message error probability.

    For each sampled codebook the decoder is rebuilt and the average error
    1 - mean_i Tr(part_i rho_alpha_i part_i) is computed exactly under the
    uniform message prior; the mean and 95% confidence radius are reported
    across codebooks.  Rates at or above chi are allowed and simply show
    high error.
    """
    if rate <= 0:
        raise ValidationError(f"rate must be positive, got {rate}")
    if codebook_samples < 1:
        raise ValidationError("need at least one codebook sample")
    outputs = [apply_channel(channel, w) for w in source.states]
    mixed_out = apply_channel(channel, source.mixture())
    chi = holevo_quantity(source, channel)
    s_bar = mixture_entropy_gap(source.prior, outputs)
    front = universal_typical_subspace(mixed_out, params, max_dim)
    errors = np.empty(codebook_samples)
    for t in range(codebook_samples):
        codebook = generate_codebook(
            source.prior, n, rate, child_seed(seed, "codebook", t)
        )
        states, _, povm = decoder_for_codebook(
            codebook, outputs, front, s_bar, params, max_dim
        )
        success = [
            success_probability(povm, i, st)
            for i, st in enumerate(states, start=1)
        ]
        errors[t] = 1.0 - float(np.mean(success))
    mean = float(np.clip(errors.mean(), 0.0, 1.0))
    ci95 = (
        1.96 * float(errors.std(ddof=1)) / codebook_samples**0.5
        if codebook_samples > 1
        else 0.0
    )
    return ErrorExperimentResult(
        n=n,
        rate=rate,
        trials=trials,
        codebook_samples=codebook_samples,
        num_messages=message_count(n, rate),
        p_err_mean=mean,
        p_err_ci95=ci95,
        chi=chi,
        seed=seed,
    )


def default_epsilon(chi: float, rate: float) -> float:
    """Per-run epsilon keeping rate + epsilon below chi with 0.05 margin,
    falling back to 0.05 when the rate already exceeds capacity."""
    margin = chi - rate - 0.05
    return margin if margin > 0 else 0.05
