import math

import numpy as np
import pytest

from cq_lab import (
    Codebook,
    CqSource,
    DensityMatrix,
    DimensionMismatchError,
    QuantumChannel,
    Subspace,
    build_sequential_povm,
    generate_codebook,
    measure,
    quantum_codeword,
    run_error_experiment,
    success_probability,
)
from cq_lab.codec import SequentialPOVM
from cq_lab.quantum_core import mixture_entropy_gap
from cq_lab.rng import child_seed, stream
from cq_lab.simulator import decoder_for_codebook, default_epsilon
from cq_lab.typicality import (
    TypicalSetParams,
    conditional_typical_subspace,
    is_p_typical,
    universal_typical_subspace,
)

from test_codec import SEED7_CODEWORDS, seed7_decoder

# frozen from the seed-7 decoder of test_codec
SEED7_SUCCESS = {1: 0.9419417382415922, 2: 0.3784355027754483}


def orthogonal_two_part_povm():
    basis = np.eye(8, dtype=complex)
    parts = [Subspace(basis[:, :3]), Subspace(basis[:, 3:5])]
    error = Subspace(basis[:, 5:])
    return SequentialPOVM(parts, error)


class TestMeasure:
    def test_state_inside_first_part(self):
        povm = orthogonal_two_part_povm()
        rho = DensityMatrix(np.diag([1.0] + [0.0] * 7))
        outcome = measure(povm, rho, stream(0, "measure"))
        assert outcome.outcome_index == 1
        assert outcome.probability == pytest.approx(1.0)
        assert outcome.post_state is not None

    def test_error_part_state(self):
        povm = orthogonal_two_part_povm()
        rho = DensityMatrix(np.diag([0.0] * 5 + [1.0, 0.0, 0.0]))
        outcome = measure(povm, rho, stream(1, "measure"))
        assert outcome.outcome_index == 3
        assert outcome.probability == pytest.approx(1.0)

    def test_uniform_restricted_frequencies_within_four_sigma(self):
        povm = orthogonal_two_part_povm()
        rho = DensityMatrix(np.diag([1 / 5] * 5 + [0.0] * 3))
        rng = stream(2, "measure")
        counts = np.zeros(3, dtype=int)
        draws = 10_000
        for _ in range(draws):
            counts[measure(povm, rho, rng).outcome_index - 1] += 1
        for index, expected in enumerate([3 / 5, 2 / 5, 0.0]):
            sigma = math.sqrt(draws * max(expected * (1 - expected), 1e-12))
            assert abs(counts[index] - draws * expected) <= 4 * sigma + 1

    def test_outcome_distribution_matches_exact_traces(self, binary_source):
        _, _, states, _, povm = seed7_decoder(binary_source)
        rho = states[0].to_dense()
        exact = [
            float(np.real(np.trace(p.basis.conj().T @ rho.entries @ p.basis)))
            if p.rank
            else 0.0
            for p in povm.parts + (povm.error_part,)
        ]
        rng = stream(3, "measure")
        draws = 10_000
        counts = np.zeros(len(exact), dtype=int)
        for _ in range(draws):
            counts[measure(povm, rho, rng).outcome_index - 1] += 1
        for index, p in enumerate(exact):
            sigma = math.sqrt(draws * max(p * (1 - p), 1e-12))
            assert abs(counts[index] - draws * p) <= 4 * sigma + 1

    def test_collapse_is_idempotent(self, binary_source):
        _, _, states, _, povm = seed7_decoder(binary_source)
        rng = stream(4, "measure")
        outcome = measure(povm, states[1].to_dense(), rng)
        part = (povm.parts + (povm.error_part,))[outcome.outcome_index - 1]
        repeat = float(
            np.real(
                np.trace(
                    part.basis.conj().T @ outcome.post_state.entries @ part.basis
                )
            )
        )
        assert repeat == pytest.approx(1.0, abs=1e-8)

    def test_dimension_mismatch(self):
        povm = orthogonal_two_part_povm()
        with pytest.raises(DimensionMismatchError):
            measure(povm, DensityMatrix(np.eye(2) / 2), stream(5, "measure"))


class TestSuccessProbability:
    def test_single_message_full_front_pure_codeword(self, binary_source):
        codebook = Codebook(n=2, rate=1e-10, num_messages=1, num_symbols=2,
                            codewords=np.array([[1, 1]]), seed=0)
        params = TypicalSetParams(n=2, delta=0.5, epsilon=0.1)
        state = quantum_codeword(codebook, 1, list(binary_source.states))
        typical = conditional_typical_subspace(state.spectral, 0.0, params)
        povm = build_sequential_povm(codebook, Subspace.full(4), [typical])
        assert success_probability(povm, 1, state) == pytest.approx(1.0, abs=1e-12)

    def test_codeword_orthogonal_to_its_part(self, binary_source):
        codebook = Codebook(n=1, rate=1e-10, num_messages=1, num_symbols=2,
                            codewords=np.array([[1]]), seed=0)
        state = quantum_codeword(codebook, 1, list(binary_source.states))
        adversarial = SequentialPOVM(
            [Subspace(np.eye(2, dtype=complex)[:, 1:])],
            Subspace(np.eye(2, dtype=complex)[:, :1]),
        )
        assert success_probability(adversarial, 1, state) == pytest.approx(0.0, abs=1e-12)

    def test_seed7_fixture_and_sampling_agreement(self, binary_source):
        codebook, _, states, _, povm = seed7_decoder(binary_source)
        assert codebook.codewords.tolist() == SEED7_CODEWORDS
        rng = stream(6, "measure")
        draws = 10_000
        for message, expected in SEED7_SUCCESS.items():
            value = success_probability(povm, message, states[message - 1])
            assert value == pytest.approx(expected, abs=1e-12)
            hits = sum(
                measure(povm, states[message - 1].to_dense(), rng).outcome_index
                == message
                for _ in range(draws)
            )
            sigma = math.sqrt(draws * expected * (1 - expected))
            assert abs(hits - draws * expected) <= 4 * sigma


class TestRunErrorExperiment:
    def test_single_symbol_source_decodes_perfectly(self):
        source = CqSource([DensityMatrix([[1, 0], [0, 0]])], [1.0])
        params = TypicalSetParams(n=4, delta=0.5, epsilon=0.1)
        result = run_error_experiment(
            source, QuantumChannel.identity(2), 4, 1e-10, params,
            trials=1, codebook_samples=5, seed=0,
        )
        assert result.num_messages == 1
        assert result.p_err_mean == pytest.approx(0.0, abs=1e-10)

    def test_orthogonal_outputs_match_classical_counting(self):
        source = CqSource(
            [DensityMatrix(np.diag([1.0, 0.0])), DensityMatrix(np.diag([0.0, 1.0]))],
            [0.5, 0.5],
        )
        params = TypicalSetParams(n=8, delta=0.5, epsilon=0.1)
        result = run_error_experiment(
            source, QuantumChannel.identity(2), 8, 0.5, params,
            trials=1, codebook_samples=40, seed=9,
        )
        assert result.chi == pytest.approx(1.0)
        assert result.p_err_mean < 0.2
        # noiseless classical analog: message i survives when its codeword is
        # frequency-typical for the uniform output and unclaimed by j < i
        classical = []
        for t in range(40):
            codebook = generate_codebook([0.5, 0.5], 8, 0.5, child_seed(9, "codebook", t))
            errors = 0
            seen = set()
            for i in range(1, codebook.num_messages + 1):
                word = tuple(codebook.codeword(i))
                ok = word not in seen and is_p_typical(word, [0.5, 0.5], params)
                seen.add(word)
                errors += not ok
            classical.append(errors / codebook.num_messages)
        classical_mean = float(np.mean(classical))
        assert result.p_err_mean == pytest.approx(classical_mean, abs=1e-10)

    def test_indistinguishable_outputs_fail(self, plus_state):
        source = CqSource([plus_state, plus_state], [0.5, 0.5])
        params = TypicalSetParams(n=4, delta=0.5, epsilon=0.1)
        result = run_error_experiment(
            source, QuantumChannel.identity(2), 4, 0.5, params,
            trials=1, codebook_samples=10, seed=10,
        )
        assert result.chi == pytest.approx(0.0, abs=1e-12)
        assert result.num_messages >= 2
        assert result.p_err_mean >= 0.4

    def test_error_decreases_with_blocklength(self, binary_source, identity_channel):
        results = {}
        for n in (4, 8):
            params = TypicalSetParams(n=n, delta=0.5, epsilon=0.1)
            results[n] = run_error_experiment(
                binary_source, identity_channel, n, 0.3, params,
                trials=1, codebook_samples=40, seed=21,
            )
        assert results[8].p_err_mean < results[4].p_err_mean

    def test_rate_above_capacity_is_allowed(self, plus_state, zero_state):
        source = CqSource([zero_state, plus_state], [0.5, 0.5])
        params = TypicalSetParams(n=4, delta=0.5, epsilon=0.1)
        result = run_error_experiment(
            source, QuantumChannel.identity(2), 4, 1.5, params,
            trials=1, codebook_samples=3, seed=2,
        )
        assert result.p_err_mean > 0.5


class TestDefaultEpsilon:
    def test_keeps_margin_below_capacity(self):
        assert default_epsilon(0.6, 0.3) == pytest.approx(0.25)

    def test_falls_back_above_capacity(self):
        assert default_epsilon(0.2, 0.5) == pytest.approx(0.05)
