"""Finite compound channels: worst-case capacity and the two-stage decoder.

The receiver first identifies which deduplicated mixed output the adversary's
channel produced, through a cascade of binary typicality tests, then decodes
the message with a sequential decoder built behind the accumulated test
operator.  That operator is a product of non-commuting projections, so it is
applied as a conjugation X -> P X P^dag and never assumed Hermitian.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, DimensionMismatchError, ValidationError
from .quantum_core import (
    DEFAULT_MAX_DIM,
    INFINITE_DIVERGENCE,
    CqSource,
    DensityMatrix,
    QuantumChannel,
    Subspace,
    apply_channel,
    holevo_quantity,
    meet,
    mixture_entropy_gap,
    orthonormal_range,
    relative_entropy,
    spectral_decomposition,
)
from .codec import (
    SequentialPOVM,
    generate_codebook,
    message_count,
    quantum_codeword,
    sequential_parts,
)
from .rng import child_seed
from .typicality import (
    ZERO_EIGENVALUE_CLAMP,
    TypicalSetParams,
    conditional_typical_subspace,
    relative_typical_subspace,
    universal_typical_subspace,
)

DEDUP_TRACE_DISTANCE = 1e-9


class CompoundChannelSet:
    """A finite family of channels the adversary chooses from."""

    __slots__ = ("channels", "in_dim", "out_dim")

    def __init__(self, channels):
        channels = tuple(channels)
        if not channels:
            raise ValidationError("a compound set needs at least one channel")
        for ch in channels:
            if not isinstance(ch, QuantumChannel):
                raise ValidationError("compound members must be QuantumChannel instances")
            if ch.in_dim != channels[0].in_dim or ch.out_dim != channels[0].out_dim:
                raise DimensionMismatchError(
                    "compound members disagree in dimension: "
                    f"({ch.in_dim},{ch.out_dim}) vs ({channels[0].in_dim},{channels[0].out_dim})"
                )
        self.channels = channels
        self.in_dim = channels[0].in_dim
        self.out_dim = channels[0].out_dim

    @property
    def size(self) -> int:
        return len(self.channels)

    def __repr__(self):
        return f"CompoundChannelSet(size={self.size}, in_dim={self.in_dim})"


def compound_holevo(channel_set: CompoundChannelSet, source: CqSource) -> float:
    """Worst case over the set: min_E chi(E, P, omega)."""
    return min(holevo_quantity(source, ch) for ch in channel_set.channels)


def optimize_prior(
    channel_set: CompoundChannelSet,
    states,
    grid_resolution: int,
) -> tuple[np.ndarray, float]:
    """Grid search of the worst-case Holevo quantity over the prior simplex.

    The states stay fixed; only the prior is optimized, on the lattice with
    step 1/grid_resolution.  Limited to at most four states.
    """
    states = tuple(states)
    num_states = len(states)
    if num_states > 4:
        raise ValidationError(
            f"prior grid search supports at most 4 states, got {num_states}"
        )
    if grid_resolution < 1:
        raise ValidationError("grid resolution must be at least 1")
    best_prior = None
    best_value = -1.0
    for counts in itertools.product(range(grid_resolution + 1), repeat=num_states - 1):
        remainder = grid_resolution - sum(counts)
        if remainder < 0:
            continue
        weights = np.array(counts + (remainder,), dtype=np.float64) / grid_resolution
        value = compound_holevo(channel_set, CqSource(states, weights))
        if value > best_value + 1e-15:
            best_value = value
            best_prior = weights
    return best_prior, float(best_value)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Half the trace norm of the difference."""
    return 0.5 * float(np.abs(np.linalg.eigvalsh(a.entries - b.entries)).sum())


@dataclass(frozen=True)
class DiscriminationCascade:
    """Binary typicality tests over the deduplicated channel outputs.

    ``tests[k-1]`` is the order-k test subspace on the n-fold output space;
    ``channel_groups[k-1]`` lists the 1-based channel indices whose averaged
    output equals ``distinct_outputs[k-1]``.
    """

    distinct_outputs: tuple
    tests: tuple
    channel_groups: tuple
    n: int
    epsilon: float

    def __post_init__(self):
        if not (len(self.distinct_outputs) == len(self.tests) == len(self.channel_groups)):
            raise ValidationError("cascade components disagree in length")
        for i, a in enumerate(self.distinct_outputs):
            for b in self.distinct_outputs[i + 1 :]:
                if trace_distance(a, b) <= DEDUP_TRACE_DISTANCE:
                    raise ValidationError("distinct outputs are not pairwise distinct")

    @property
    def num_outputs(self) -> int:
        return len(self.tests)

    def group_of(self, channel_index: int) -> int:
        """Deduplicated output index (1-based) produced by the given channel."""
        for k, group in enumerate(self.channel_groups, start=1):
            if channel_index in group:
                return k
        raise ValidationError(f"channel index {channel_index} not in any group")

    def apply_test_operator(self, k: int, columns: np.ndarray) -> np.ndarray:
        """Apply P^k = test_k comp_{k-1} ... comp_1 to a column batch."""
        out = np.asarray(columns, dtype=np.complex128)
        for j in range(k - 1):
            out = self.tests[j].apply_complement(out)
        return self.tests[k - 1].apply(out)

    def apply_test_operator_adjoint(self, k: int, columns: np.ndarray) -> np.ndarray:
        """Apply (P^k)^dag = comp_1 ... comp_{k-1} test_k to a column batch."""
        out = self.tests[k - 1].apply(np.asarray(columns, dtype=np.complex128))
        for j in range(k - 2, -1, -1):
            out = self.tests[j].apply_complement(out)
        return out


def _product_support_subspace(rho: DensityMatrix, n: int, max_dim: int) -> Subspace:
    """Support projector of rho^(x n), built from per-symbol support columns."""
    if rho.dim**n > max_dim:
        raise CapacityError(
            f"product dimension {rho.dim}^{n} = {rho.dim ** n} exceeds the configured cap {max_dim}"
        )
    dec = spectral_decomposition(rho)
    cols = dec.eigenvectors[:, dec.eigenvalues > ZERO_EIGENVALUE_CLAMP]
    basis = np.ones((1, 1), dtype=np.complex128)
    for _ in range(n):
        basis = np.kron(basis, cols)
    return Subspace(basis, validate=False)


def build_discrimination_cascade(
    channel_set: CompoundChannelSet,
    source: CqSource,
    params: TypicalSetParams,
    max_dim: int = DEFAULT_MAX_DIM,
) -> DiscriminationCascade:
    """Deduplicate the averaged outputs and build one test per distinct output.

    Test k is the meet over j != k of the relative typical subspaces of
    (output_k, output_j); pairs with infinite relative entropy use the support
    projector of output_k^(x n) instead (discrimination is then exact).
    Requires epsilon below half of every finite pairwise relative entropy.
    """
    omega = source.mixture()
    averaged = [apply_channel(ch, omega) for ch in channel_set.channels]
    representatives: list[DensityMatrix] = []
    groups: list[list[int]] = []
    for index, out in enumerate(averaged, start=1):
        for k, rep in enumerate(representatives):
            if trace_distance(out, rep) <= DEDUP_TRACE_DISTANCE:
                groups[k].append(index)
                break
        else:
            representatives.append(out)
            groups.append([index])
    count = len(representatives)
    divergences = {}
    for i, j in itertools.permutations(range(count), 2):
        div = relative_entropy(representatives[i], representatives[j])
        divergences[(i, j)] = div
        if div is not INFINITE_DIVERGENCE and params.epsilon >= div / 2:
            raise ValidationError(
                f"epsilon {params.epsilon} is not below half the relative entropy "
                f"{div:.6f} of distinct outputs ({i + 1}, {j + 1})"
            )
    tests = []
    for i in range(count):
        pieces = []
        for j in range(count):
            if j == i:
                continue
            if divergences[(i, j)] is INFINITE_DIVERGENCE:
                pieces.append(
                    _product_support_subspace(representatives[i], params.n, max_dim)
                )
            else:
                pieces.append(
                    relative_typical_subspace(
                        representatives[i], representatives[j], params, max_dim
                    )
                )
        if not pieces:
            test = universal_typical_subspace(representatives[i], params, max_dim)
        else:
            test = pieces[0]
            for piece in pieces[1:]:
                test = meet(test, piece)
        tests.append(test)
    return DiscriminationCascade(
        distinct_outputs=tuple(representatives),
        tests=tuple(tests),
        channel_groups=tuple(tuple(g) for g in groups),
        n=params.n,
        epsilon=params.epsilon,
    )


def identify_mixed_state(
    cascade: DiscriminationCascade,
    rho_in: DensityMatrix,
    rng: np.random.Generator,
) -> tuple[int | None, DensityMatrix, list]:
    """Run the binary tests in order, collapsing the state after each.

    Stops at the first test that fires; returns (k or None when every test
    says no, the collapsed normalized state, and a transcript of
    (test index, fired, probability-of-yes) triples).
    """
    if cascade.tests and cascade.tests[0].ambient_dim != rho_in.dim:
        raise DimensionMismatchError(
            f"cascade ambient dimension {cascade.tests[0].ambient_dim} "
            f"does not match state dimension {rho_in.dim}"
        )
    current = rho_in.entries.copy()
    transcript = []
    for k, test in enumerate(cascade.tests, start=1):
        if test.rank:
            reduced = test.basis.conj().T @ current @ test.basis
            p_yes = float(np.clip(np.real(np.trace(reduced)), 0.0, 1.0))
        else:
            reduced = None
            p_yes = 0.0
        fired = bool(rng.random() < p_yes)
        transcript.append((k, fired, p_yes))
        if fired:
            collapsed = test.basis @ reduced @ test.basis.conj().T / p_yes
            return k, DensityMatrix(collapsed), transcript
        if test.rank:
            projected = test.apply(current)
            inside = test.basis @ reduced @ test.basis.conj().T
            current = current - projected - projected.conj().T + inside
        norm = float(np.real(np.trace(current)))
        if norm <= 0:
            raise ValidationError("complement collapse lost all probability mass")
        current = current / norm
    return None, DensityMatrix(current), transcript


def build_compound_message_povm(
    cascade: DiscriminationCascade,
    k: int,
    codebook,
    typical_by_channel,
) -> SequentialPOVM:
    """Message decoder used after identifying distinct output k.

    For each message the candidate subspace is the orthonormalized union of
    the conditional typical subspaces over the channels in group k; the parts
    are then built by deflation behind the accumulated test operator P^k.
    """
    if not 1 <= k <= cascade.num_outputs:
        raise ValidationError(f"output index {k} out of range 1..{cascade.num_outputs}")
    group = cascade.channel_groups[k - 1]
    for l in group:
        if l not in typical_by_channel:
            raise ValidationError(f"missing typical subspaces for channel {l}")
        if len(typical_by_channel[l]) != codebook.num_messages:
            raise ValidationError(
                f"channel {l} provides {len(typical_by_channel[l])} typical subspaces "
                f"for M={codebook.num_messages} messages"
            )
    dim = cascade.tests[k - 1].ambient_dim
    union_bases = []
    for i in range(codebook.num_messages):
        stacked = np.hstack([typical_by_channel[l][i].basis for l in group])
        union_bases.append(orthonormal_range(stacked))
    parts, error_part = sequential_parts(
        lambda cols: cascade.apply_test_operator(k, cols), union_bases, dim
    )
    return SequentialPOVM(parts, error_part, validate=False)


@dataclass(frozen=True)
class CompoundAdversaryResult:
    """Per-adversary row: identification failure and end-to-end error."""

    adversary: int
    k_true: int
    ident_fail_rate: float
    ident_fail_ci95: float
    p_err_mean: float
    p_err_ci95: float


@dataclass(frozen=True)
class CompoundExperimentResult:
    n: int
    rate: float
    codebook_samples: int
    num_messages: int
    chi: float
    seed: int
    per_adversary: tuple
    worst: CompoundAdversaryResult = field(init=False)

    def __post_init__(self):
        worst = max(self.per_adversary, key=lambda row: row.p_err_mean)
        object.__setattr__(self, "worst", worst)


def _mean_ci(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.clip(values.mean(), 0.0, 1.0))
    ci = 1.96 * float(values.std(ddof=1)) / values.size**0.5 if values.size > 1 else 0.0
    return mean, ci


def run_compound_experiment(
    channel_set: CompoundChannelSet,
    source: CqSource,
    n: int,
    rate: float,
    params: TypicalSetParams,
    codebook_samples: int,
    seed: int,
    max_dim: int = DEFAULT_MAX_DIM,
) -> CompoundExperimentResult:
    """End-to-end two-stage decoding against every adversary choice.

    Per codebook and message both stages are evaluated exactly:
    identification success Tr(P^k rho P^k dag) and joint success
    Tr(part_i P^k rho P^k dag part_i) with k the true output index, averaged
    over the uniform message prior.  Reports one row per adversary plus the
    worst case over the set.
    """
    cascade = build_discrimination_cascade(channel_set, source, params, max_dim)
    chi = compound_holevo(channel_set, source)
    outputs_per_channel = {
        o: [apply_channel(ch, w) for w in source.states]
        for o, ch in enumerate(channel_set.channels, start=1)
    }
    s_bar_per_channel = {
        o: mixture_entropy_gap(source.prior, outs)
        for o, outs in outputs_per_channel.items()
    }
    a = channel_set.size
    m = message_count(n, rate)
    ident_fail = {o: np.empty(codebook_samples) for o in range(1, a + 1)}
    p_err = {o: np.empty(codebook_samples) for o in range(1, a + 1)}
    for t in range(codebook_samples):
        codebook = generate_codebook(
            source.prior, n, rate, child_seed(seed, "compound-codebook", t)
        )
        states_by_channel = {
            o: [
                quantum_codeword(codebook, i, outputs_per_channel[o])
                for i in range(1, m + 1)
            ]
            for o in range(1, a + 1)
        }
        typical_by_channel = {
            o: [
                conditional_typical_subspace(
                    st.spectral, s_bar_per_channel[o], params, max_dim
                )
                for st in states_by_channel[o]
            ]
            for o in range(1, a + 1)
        }
        povm_by_k = {}
        for o in range(1, a + 1):
            k = cascade.group_of(o)
            if k not in povm_by_k:
                povm_by_k[k] = build_compound_message_povm(
                    cascade, k, codebook, typical_by_channel
                )
            povm = povm_by_k[k]
            ident_success = np.empty(m)
            joint_success = np.empty(m)
            for i in range(1, m + 1):
                g = states_by_channel[o][i - 1].sqrt_columns()
                pushed = cascade.apply_test_operator(k, g)
                ident_success[i - 1] = float(np.linalg.norm(pushed) ** 2)
                part = povm.parts[i - 1]
                if part.rank:
                    joint_success[i - 1] = float(
                        np.linalg.norm(part.basis.conj().T @ pushed) ** 2
                    )
                else:
                    joint_success[i - 1] = 0.0
            ident_fail[o][t] = 1.0 - float(ident_success.mean())
            p_err[o][t] = 1.0 - float(joint_success.mean())
    rows = []
    for o in range(1, a + 1):
        fail_mean, fail_ci = _mean_ci(ident_fail[o])
        err_mean, err_ci = _mean_ci(p_err[o])
        rows.append(
            CompoundAdversaryResult(
                adversary=o,
                k_true=cascade.group_of(o),
                ident_fail_rate=fail_mean,
                ident_fail_ci95=fail_ci,
                p_err_mean=err_mean,
                p_err_ci95=err_ci,
            )
        )
    return CompoundExperimentResult(
        n=n,
        rate=rate,
        codebook_samples=codebook_samples,
        num_messages=m,
        chi=chi,
        seed=seed,
        per_adversary=tuple(rows),
    )
