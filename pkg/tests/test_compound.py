import math

import numpy as np
import pytest

from cq_lab import (
    CompoundChannelSet,
    CqSource,
    DensityMatrix,
    QuantumChannel,
    Subspace,
    ValidationError,
    build_compound_message_povm,
    build_discrimination_cascade,
    compound_holevo,
    holevo_quantity,
    identify_mixed_state,
    optimize_prior,
    run_compound_experiment,
    run_error_experiment,
)
from cq_lab.codec import SequentialPOVM, build_sequential_povm, generate_codebook, quantum_codeword
from cq_lab.compound import trace_distance
from cq_lab.quantum_core import apply_channel, kron_power, mixture_entropy_gap, project_trace
from cq_lab.rng import child_seed, stream
from cq_lab.simulator import decoder_for_codebook
from cq_lab.typicality import (
    TypicalSetParams,
    conditional_typical_subspace,
    universal_typical_subspace,
)

from oracles import (
    binary_entropy,
    classical_first_claim_decoder,
    dense_gram_schmidt,
    eig2,
    shannon_entropy,
)


def uniformizer_channel():
    """Sends every input to the maximally mixed qubit state."""
    kraus = []
    for i in range(2):
        for j in range(2):
            k = np.zeros((2, 2), dtype=complex)
            k[i, j] = 1 / math.sqrt(2)
            kraus.append(k)
    return QuantumChannel(kraus)


def bit_flip_channel(p):
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    return QuantumChannel([math.sqrt(1 - p) * np.eye(2, dtype=complex), math.sqrt(p) * x])


@pytest.fixture
def classical_bit_source():
    states = [DensityMatrix(np.diag([1.0, 0.0])), DensityMatrix(np.diag([0.0, 1.0]))]
    return CqSource(states, [0.5, 0.5])


@pytest.fixture
def biased_bit_source():
    states = [DensityMatrix(np.diag([1.0, 0.0])), DensityMatrix(np.diag([0.0, 1.0]))]
    return CqSource(states, [0.9, 0.1])


class TestCompoundHolevo:
    def test_singleton_reduces_to_holevo(self, binary_source, identity_channel):
        single = CompoundChannelSet([identity_channel])
        assert compound_holevo(single, binary_source) == pytest.approx(
            holevo_quantity(binary_source, identity_channel)
        )

    def test_uniformizer_kills_capacity(self, binary_source, identity_channel):
        channel_set = CompoundChannelSet([identity_channel, uniformizer_channel()])
        assert compound_holevo(channel_set, binary_source) == pytest.approx(0.0, abs=1e-12)

    def test_identity_dephasing_pair(self, binary_source, identity_channel, dephasing_channel):
        channel_set = CompoundChannelSet([identity_channel, dephasing_channel])
        top, bottom = eig2([[0.75, 0.25], [0.25, 0.25]])
        chi_identity = shannon_entropy([top, bottom])
        chi_dephased = shannon_entropy([0.75, 0.25]) - 0.5 * 1.0
        expected = min(chi_identity, chi_dephased)
        assert compound_holevo(channel_set, binary_source) == pytest.approx(
            expected, abs=1e-12
        )
        assert expected == pytest.approx(0.311278, abs=1e-6)


class TestOptimizePrior:
    def test_symmetric_pair_prefers_uniform(self, binary_source, identity_channel):
        channel_set = CompoundChannelSet([identity_channel])
        prior, value = optimize_prior(channel_set, binary_source.states, 20)
        assert abs(prior[0] - 0.5) <= 1 / 20 + 1e-12
        assert value >= 0.600876 - 1e-5

    def test_single_state(self, zero_state, identity_channel):
        channel_set = CompoundChannelSet([identity_channel])
        prior, value = optimize_prior(channel_set, [zero_state], 10)
        assert prior.tolist() == [1.0]
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_identical_states_flat_at_zero(self, plus_state, identity_channel):
        channel_set = CompoundChannelSet([identity_channel])
        _, value = optimize_prior(channel_set, [plus_state, plus_state], 8)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_too_many_states_rejected(self, zero_state, identity_channel):
        channel_set = CompoundChannelSet([identity_channel])
        with pytest.raises(ValidationError, match="at most 4"):
            optimize_prior(channel_set, [zero_state] * 5, 4)


class TestBuildDiscriminationCascade:
    def test_single_output_uses_universal_subspace(self, binary_source, identity_channel):
        params = TypicalSetParams(n=4, delta=0.5, epsilon=0.1)
        channel_set = CompoundChannelSet([identity_channel])
        cascade = build_discrimination_cascade(channel_set, binary_source, params)
        assert cascade.num_outputs == 1
        universal = universal_typical_subspace(binary_source.mixture(), params)
        assert cascade.tests[0].rank == universal.rank
        residual = cascade.tests[0].basis - universal.apply(cascade.tests[0].basis)
        assert np.abs(residual).max() < 1e-10

    def test_orthogonal_supports_use_support_projector(self):
        source = CqSource([DensityMatrix(np.diag([1.0, 0.0]))], [1.0])
        flip = bit_flip_channel(1.0)
        channel_set = CompoundChannelSet([QuantumChannel.identity(2), flip])
        params = TypicalSetParams(n=3, delta=0.5, epsilon=0.1)
        cascade = build_discrimination_cascade(channel_set, source, params)
        assert cascade.num_outputs == 2
        assert cascade.tests[0].rank == 1
        rho2_n = kron_power(np.diag([0.0, 1.0]).astype(complex), 3)
        cross = cascade.tests[0].basis.conj().T @ rho2_n @ cascade.tests[0].basis
        assert np.abs(cross).max() < 1e-14

    def test_epsilon_precondition_names_pair(self, biased_bit_source):
        channel_set = CompoundChannelSet([QuantumChannel.identity(2), uniformizer_channel()])
        params = TypicalSetParams(n=4, delta=0.5, epsilon=0.4)
        with pytest.raises(ValidationError, match=r"\(1, 2\)"):
            build_discrimination_cascade(channel_set, biased_bit_source, params)

    def test_dedup_groups_partition_channels(self, binary_source, identity_channel):
        channel_set = CompoundChannelSet([identity_channel, identity_channel])
        params = TypicalSetParams(n=3, delta=0.5, epsilon=0.1)
        cascade = build_discrimination_cascade(channel_set, binary_source, params)
        assert cascade.num_outputs == 1
        assert cascade.channel_groups == ((1, 2),)
        mixed = apply_channel(identity_channel, binary_source.mixture())
        assert trace_distance(cascade.distinct_outputs[0], mixed) <= 1e-12

    def test_discrimination_bound_on_diagonal_pair(self, biased_bit_source):
        channel_set = CompoundChannelSet([QuantumChannel.identity(2), uniformizer_channel()])
        params = TypicalSetParams(n=10, delta=0.5, epsilon=0.1)
        cascade = build_discrimination_cascade(channel_set, biased_bit_source, params)
        sigma_n = kron_power(np.eye(2, dtype=complex) / 2, 10)
        mass = float(
            np.real(
                np.trace(
                    cascade.tests[0].basis.conj().T @ sigma_n @ cascade.tests[0].basis
                )
            )
        )
        divergence = 1 - binary_entropy(0.9)
        assert mass <= 2 ** (-10 * (divergence - 0.1))


class TestIdentifyMixedState:
    def build_biased_cascade(self, biased_bit_source, delta=1.0, epsilon=0.1, n=10):
        channel_set = CompoundChannelSet([QuantumChannel.identity(2), uniformizer_channel()])
        params = TypicalSetParams(n=n, delta=delta, epsilon=epsilon)
        return build_discrimination_cascade(channel_set, biased_bit_source, params)

    def test_state_in_first_test_needs_one_measurement(self, biased_bit_source):
        cascade = self.build_biased_cascade(biased_bit_source, n=6)
        vector = cascade.tests[0].basis[:, 0]
        rho = DensityMatrix(np.outer(vector, vector.conj()))
        k, collapsed, transcript = identify_mixed_state(cascade, rho, stream(0, "identify"))
        assert k == 1
        assert len(transcript) == 1
        assert transcript[0][1] is True

    def test_state_outside_all_tests_fails(self, biased_bit_source):
        cascade = self.build_biased_cascade(biased_bit_source, n=6)
        dim = cascade.tests[0].ambient_dim
        blocked = np.zeros(dim, dtype=complex)
        # a basis sequence with seven heads is atypical for both tests at n=6
        candidates = [v for v in range(dim) if bin(v).count("1") == 2]
        blocked[candidates[0]] = 1.0
        rho = DensityMatrix(np.outer(blocked, blocked.conj()))
        inside = any(
            np.linalg.norm(t.basis.conj().T @ blocked) > 1e-9 for t in cascade.tests
        )
        if inside:
            pytest.skip("chosen vector not orthogonal to the tests")
        k, _, transcript = identify_mixed_state(cascade, rho, stream(1, "identify"))
        assert k is None
        assert len(transcript) == cascade.num_outputs

    def test_uniform_adversary_detection_rate(self, biased_bit_source):
        # true output index 2: sampled success agrees with the exact trace and
        # stays above 1 - 2 a-bar epsilon
        cascade = self.build_biased_cascade(biased_bit_source)
        dim = 2**10
        rho = DensityMatrix(np.eye(dim, dtype=complex) / dim)
        g = np.eye(dim, dtype=complex) / math.sqrt(dim)
        exact = float(np.linalg.norm(cascade.apply_test_operator(2, g)) ** 2)
        rng = stream(2, "identify")
        runs = 1000
        hits = sum(
            identify_mixed_state(cascade, rho, rng)[0] == 2 for _ in range(runs)
        )
        rate = hits / runs
        sigma = math.sqrt(exact * (1 - exact) / runs)
        assert abs(rate - exact) <= 4 * sigma
        assert rate >= 1 - 2 * 2 * 0.1
        assert exact >= 1 - 2 * 2 * 0.1


class TestBuildCompoundMessagePOVM:
    def test_singleton_group_reduces_to_codec_build(self, binary_source, identity_channel):
        params = TypicalSetParams(n=4, delta=0.5, epsilon=0.1)
        channel_set = CompoundChannelSet([identity_channel])
        cascade = build_discrimination_cascade(channel_set, binary_source, params)
        codebook = generate_codebook(binary_source.prior, 4, 0.5, 17)
        outputs = [apply_channel(identity_channel, w) for w in binary_source.states]
        s_bar = mixture_entropy_gap(binary_source.prior, outputs)
        typical = [
            conditional_typical_subspace(
                quantum_codeword(codebook, i, outputs).spectral, s_bar, params
            )
            for i in range(1, codebook.num_messages + 1)
        ]
        compound_povm = build_compound_message_povm(
            cascade, 1, codebook, {1: typical}
        )
        front = Subspace(cascade.tests[0].basis)
        codec_povm = build_sequential_povm(codebook, front, typical)
        assert [p.rank for p in compound_povm.parts] == [p.rank for p in codec_povm.parts]
        for ours, reference in zip(compound_povm.parts, codec_povm.parts):
            if ours.rank:
                overlap = np.linalg.norm(ours.basis.conj().T @ reference.basis)
                assert overlap == pytest.approx(math.sqrt(ours.rank), abs=1e-8)

    def test_duplicate_channels_add_nothing(self, classical_bit_source, identity_channel):
        params = TypicalSetParams(n=4, delta=0.5, epsilon=0.1)
        channel_set = CompoundChannelSet([identity_channel, identity_channel])
        cascade = build_discrimination_cascade(channel_set, classical_bit_source, params)
        codebook = generate_codebook(classical_bit_source.prior, 4, 0.5, 23)
        outputs = list(classical_bit_source.states)
        typical = [
            conditional_typical_subspace(
                quantum_codeword(codebook, i, outputs).spectral, 0.0, params
            )
            for i in range(1, codebook.num_messages + 1)
        ]
        doubled = build_compound_message_povm(
            cascade, 1, codebook, {1: typical, 2: typical}
        )
        single = build_compound_message_povm(cascade, 1, codebook, {1: typical, 2: typical})
        assert [p.rank for p in doubled.parts] == [p.rank for p in single.parts]
        for part, sub in zip(doubled.parts, typical):
            assert part.rank <= sub.rank

    def test_genuine_union_against_dense_span_oracle(self, classical_bit_source):
        # identity and bit flip share the averaged output I/2 but disagree per
        # codeword, so the union spans genuinely grow
        params = TypicalSetParams(n=4, delta=1.0, epsilon=0.1)
        channel_set = CompoundChannelSet([QuantumChannel.identity(2), bit_flip_channel(1.0)])
        cascade = build_discrimination_cascade(channel_set, classical_bit_source, params)
        assert cascade.num_outputs == 1
        assert cascade.channel_groups == ((1, 2),)
        codebook = generate_codebook(classical_bit_source.prior, 4, 0.5, 29)
        typical_by_channel = {}
        for l, channel in enumerate(channel_set.channels, start=1):
            outputs = [apply_channel(channel, w) for w in classical_bit_source.states]
            s_bar = mixture_entropy_gap(classical_bit_source.prior, outputs)
            typical_by_channel[l] = [
                conditional_typical_subspace(
                    quantum_codeword(codebook, i, outputs).spectral, s_bar, params
                )
                for i in range(1, codebook.num_messages + 1)
            ]
        povm = build_compound_message_povm(cascade, 1, codebook, typical_by_channel)
        # oracle: plain Gram-Schmidt over the accumulated union vectors
        accumulated = []
        expected_ranks = []
        before = 0
        for i in range(codebook.num_messages):
            for l in (1, 2):
                for col in typical_by_channel[l][i].basis.T:
                    accumulated.append(np.asarray(col))
            basis = dense_gram_schmidt(accumulated)
            expected_ranks.append(len(basis) - before)
            before = len(basis)
        assert [p.rank for p in povm.parts] == expected_ranks
        stacked = np.hstack([p.basis for p in povm.parts + (povm.error_part,)])
        assert stacked.shape[1] == 16
        assert np.abs(stacked.conj().T @ stacked - np.eye(16)).max() < 1e-8


class TestRunCompoundExperiment:
    def test_singleton_matches_plain_experiment(self, binary_source, identity_channel):
        params = TypicalSetParams(n=8, delta=0.5, epsilon=0.1)
        plain = run_error_experiment(
            binary_source, identity_channel, 8, 0.3, params,
            trials=1, codebook_samples=20, seed=5,
        )
        compound = run_compound_experiment(
            CompoundChannelSet([identity_channel]), binary_source, 8, 0.3, params,
            codebook_samples=20, seed=5,
        )
        row = compound.per_adversary[0]
        gap = abs(row.p_err_mean - plain.p_err_mean)
        assert gap <= plain.p_err_ci95 + row.p_err_ci95
        assert row.ident_fail_rate < 0.05

    def test_duplicated_channel_collapses_to_one_output(self, binary_source, identity_channel):
        params = TypicalSetParams(n=6, delta=0.5, epsilon=0.1)
        result = run_compound_experiment(
            CompoundChannelSet([identity_channel, identity_channel]),
            binary_source, 6, 0.3, params, codebook_samples=10, seed=6,
        )
        first, second = result.per_adversary
        assert first.k_true == second.k_true == 1
        assert first.p_err_mean == pytest.approx(second.p_err_mean, abs=1e-12)

    def test_groupmates_decode_through_shared_povm(self, classical_bit_source):
        # identity and full bit flip: same averaged output, distinct codeword
        # states; the union decoder serves both adversaries
        params = TypicalSetParams(n=6, delta=1.0, epsilon=0.1)
        channel_set = CompoundChannelSet([QuantumChannel.identity(2), bit_flip_channel(1.0)])
        result = run_compound_experiment(
            channel_set, classical_bit_source, 6, 1 / 3, params,
            codebook_samples=15, seed=7,
        )
        assert result.chi == pytest.approx(1.0)
        for row in result.per_adversary:
            assert row.k_true == 1
            assert row.ident_fail_rate == pytest.approx(0.0, abs=1e-10)
            assert row.p_err_mean < 0.3

    def test_ordering_robustness(self, biased_bit_source):
        params = TypicalSetParams(n=6, delta=1.0, epsilon=0.1)
        forward = run_compound_experiment(
            CompoundChannelSet([QuantumChannel.identity(2), uniformizer_channel()]),
            biased_bit_source, 6, 0.25, params, codebook_samples=8, seed=8,
        )
        swapped = run_compound_experiment(
            CompoundChannelSet([uniformizer_channel(), QuantumChannel.identity(2)]),
            biased_bit_source, 6, 0.25, params, codebook_samples=8, seed=8,
        )
        assert [row.k_true for row in forward.per_adversary] == [1, 2]
        assert [row.k_true for row in swapped.per_adversary] == [1, 2]
        # the identity adversary is o=1 in the first order and o=2 in the second
        assert forward.per_adversary[0].adversary == 1
        assert swapped.per_adversary[1].adversary == 2

    def test_diagonal_pair_matches_classical_counting(self, classical_bit_source):
        # identity + symmetric flip channel share the mixed output, so the
        # whole pipeline is one classical first-claim decoder
        params = TypicalSetParams(n=6, delta=1.0, epsilon=0.1)
        channel_set = CompoundChannelSet([QuantumChannel.identity(2), bit_flip_channel(0.1)])
        result = run_compound_experiment(
            channel_set, classical_bit_source, 6, 1 / 3, params,
            codebook_samples=4, seed=9,
        )
        transitions = {1: np.eye(2), 2: np.array([[0.9, 0.1], [0.1, 0.9]])}
        for row in result.per_adversary:
            w = transitions[row.adversary]
            oracle_errors = []
            for t in range(4):
                codebook = generate_codebook(
                    classical_bit_source.prior, 6, 1 / 3,
                    child_seed(9, "compound-codebook", t),
                )
                words = [
                    tuple(codebook.codeword(i))
                    for i in range(1, codebook.num_messages + 1)
                ]
                success = np.zeros(len(words))
                for i, word in enumerate(words, start=1):
                    for received in np.ndindex(*([2] * 6)):
                        likelihood = 1.0
                        for x, y in zip(word, received):
                            likelihood *= w[x - 1][y]
                        if likelihood == 0.0:
                            continue
                        decoded = _first_claim(words, received, transitions, params)
                        if decoded == i:
                            success[i - 1] += likelihood
                oracle_errors.append(1 - success.mean())
            assert row.p_err_mean == pytest.approx(float(np.mean(oracle_errors)), abs=1e-9)


def _first_claim(words, received, transitions, params):
    """Union-window first-claim rule for the merged identity/flip channels."""
    n = params.n
    windows = {}
    for l, w in transitions.items():
        cond_entropy = 0.5 * shannon_entropy(w[0]) + 0.5 * shannon_entropy(w[1])
        windows[l] = (-n * (cond_entropy + params.delta), -n * (cond_entropy - params.delta))
    for i, word in enumerate(words, start=1):
        for l, w in transitions.items():
            likelihood = 1.0
            for x, y in zip(word, received):
                likelihood *= w[x - 1][y]
            if likelihood <= 0.0:
                continue
            lo, hi = windows[l]
            if lo <= math.log2(likelihood) <= hi:
                return i
    return None
