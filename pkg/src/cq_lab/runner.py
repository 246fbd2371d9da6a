"""Experiment orchestration and bit-exact result emission.

``run`` executes one configured mode and writes a CSV with a fixed column
schema plus a JSON sidecar echoing the configuration; identical configs and
seeds produce byte-identical files.  ``self_test`` is a fast invariant
battery for installation checks.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import __version__
from .cascade import (
    ClassicalDMC,
    bisect_decode,
    cascade_success_probability,
    classical_decode_experiment,
    dmc_from_source,
    encode_output_sequence,
    pad_povm,
)
from .codec import (
    SequentialPOVM,
    expected_codeword_state,
    generate_codebook,
    proj_lem_bound,
    quantum_codeword,
)
from .config import ExperimentConfig, serialize_config
from .compound import (
    CompoundChannelSet,
    compound_holevo,
    optimize_prior,
    run_compound_experiment,
)
from .errors import ConfigError
from .quantum_core import (
    CqSource,
    DensityMatrix,
    HermitianOperator,
    QuantumChannel,
    Subspace,
    apply_channel,
    holevo_quantity,
    meet,
    mixture_entropy_gap,
    project_trace,
    relative_entropy,
    spectral_decomposition,
    von_neumann_entropy,
)
from .rng import child_seed, stream
from .simulator import (
    decoder_for_codebook,
    default_epsilon,
    run_error_experiment,
    success_probability,
)
from .typicality import (
    ProductSpectral,
    TypicalSetParams,
    conditional_typical_subspace,
    is_p_typical,
    universal_typical_subspace,
)

CSV_HEADER = (
    "mode,n,R,M,trials,codebook_samples,p_err_mean,p_err_ci95,chi,"
    "ident_fail_rate,n_measurements,seed"
)
COMPOUND_CSV_HEADER = "o,k_true,ident_fail_rate,p_err,ci95"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".12g")


def _csv_row(
    mode,
    n=None,
    rate=None,
    m=None,
    trials=None,
    codebook_samples=None,
    p_err_mean=None,
    p_err_ci95=None,
    chi=None,
    ident_fail_rate=None,
    n_measurements=None,
    seed=None,
) -> str:
    cells = [
        mode,
        n,
        rate,
        m,
        trials,
        codebook_samples,
        p_err_mean,
        p_err_ci95,
        chi,
        ident_fail_rate,
        n_measurements,
        seed,
    ]
    return ",".join(_fmt(c) for c in cells)


def _params_for(config: ExperimentConfig, n: int, chi: float) -> TypicalSetParams:
    epsilon = config.epsilon
    if epsilon is None:
        epsilon = default_epsilon(chi, config.rate if config.rate else 0.0)
    return TypicalSetParams(n=n, delta=config.delta, epsilon=epsilon)


def _require(config: ExperimentConfig, mode: str, **fields):
    for name, value in fields.items():
        if value is None:
            raise ConfigError(f"mode '{mode}' requires field '{name}'")


def _run_cascade_mode(config: ExperimentConfig, source, channel, seed: int):
    """Sampled bisection decoding of the single-channel quantum experiment."""
    n, rate = config.n, config.rate
    chi = holevo_quantity(source, channel)
    params = _params_for(config, n, chi)
    outputs = [apply_channel(channel, w) for w in source.states]
    s_bar = mixture_entropy_gap(source.prior, outputs)
    front = universal_typical_subspace(
        apply_channel(channel, source.mixture()), params, config.max_dim
    )
    codebook = generate_codebook(
        source.prior, n, rate, child_seed(seed, "cascade-codebook")
    )
    states, _, povm = decoder_for_codebook(
        codebook, outputs, front, s_bar, params, config.max_dim
    )
    padded = pad_povm(povm)
    errors = 0
    measurements = 0
    for t in range(config.trials):
        message = int(stream(seed, "cascade-message", t).integers(1, codebook.num_messages + 1))
        rho = states[message - 1].to_dense(config.max_dim)
        decoded, _, measurements = bisect_decode(padded, rho, stream(seed, "bisect", t))
        if decoded != message:
            errors += 1
    p_err = errors / config.trials
    ci95 = 1.96 * (p_err * (1 - p_err) / config.trials) ** 0.5
    return chi, codebook.num_messages, p_err, ci95, measurements


def run(config: ExperimentConfig, out_dir: str = ".", mode: str | None = None) -> dict:
    """Execute one mode and write results.csv plus a run.json sidecar.

    Returns a mapping from artifact kind to the written path.  The compound
    mode additionally writes compound.csv with one row per adversary.
    """
    mode = mode or config.mode
    if mode is None:
        raise ConfigError("no mode given: set 'mode' in the config or pass one explicitly")
    if config.mode is not None and mode != config.mode:
        raise ConfigError(
            f"requested mode '{mode}' conflicts with config mode '{config.mode}'"
        )
    source = config.build_source()
    channels = config.build_channels()
    seed = config.seed
    rows: list[str] = []
    extras: dict = {}
    compound_rows: list[str] = []

    if mode == "entropy":
        chi = compound_holevo(CompoundChannelSet(channels), source)
        rows.append(_csv_row("entropy", chi=chi, seed=seed))
        extras["chi"] = chi
    elif mode == "capacity":
        channel_set = CompoundChannelSet(channels)
        best_prior, best_value = optimize_prior(
            channel_set, source.states, config.grid_resolution
        )
        rows.append(_csv_row("capacity", chi=best_value, seed=seed))
        extras["chi"] = best_value
        extras["best_prior"] = [float(p) for p in best_prior]
    elif mode == "single":
        _require(config, mode, n=config.n, rate=config.rate)
        chi = holevo_quantity(source, channels[0])
        params = _params_for(config, config.n, chi)
        result = run_error_experiment(
            source,
            channels[0],
            config.n,
            config.rate,
            params,
            config.trials,
            config.codebook_samples,
            seed,
            config.max_dim,
        )
        rows.append(
            _csv_row(
                "single",
                n=result.n,
                rate=result.rate,
                m=result.num_messages,
                trials=result.trials,
                codebook_samples=result.codebook_samples,
                p_err_mean=result.p_err_mean,
                p_err_ci95=result.p_err_ci95,
                chi=result.chi,
                seed=seed,
            )
        )
    elif mode == "sweep-n":
        _require(config, mode, n_range=config.n_range, rate=config.rate)
        chi = holevo_quantity(source, channels[0])
        for n in config.n_range:
            params = _params_for(config, n, chi)
            result = run_error_experiment(
                source,
                channels[0],
                n,
                config.rate,
                params,
                config.trials,
                config.codebook_samples,
                seed,
                config.max_dim,
            )
            rows.append(
                _csv_row(
                    "sweep-n",
                    n=result.n,
                    rate=result.rate,
                    m=result.num_messages,
                    trials=result.trials,
                    codebook_samples=result.codebook_samples,
                    p_err_mean=result.p_err_mean,
                    p_err_ci95=result.p_err_ci95,
                    chi=result.chi,
                    seed=seed,
                )
            )
    elif mode == "compound":
        _require(config, mode, n=config.n, rate=config.rate)
        channel_set = CompoundChannelSet(channels)
        chi = compound_holevo(channel_set, source)
        params = _params_for(config, config.n, chi)
        result = run_compound_experiment(
            channel_set,
            source,
            config.n,
            config.rate,
            params,
            config.codebook_samples,
            seed,
            config.max_dim,
        )
        worst = result.worst
        rows.append(
            _csv_row(
                "compound",
                n=result.n,
                rate=result.rate,
                m=result.num_messages,
                codebook_samples=result.codebook_samples,
                p_err_mean=worst.p_err_mean,
                p_err_ci95=worst.p_err_ci95,
                chi=result.chi,
                ident_fail_rate=worst.ident_fail_rate,
                seed=seed,
            )
        )
        for row in result.per_adversary:
            compound_rows.append(
                ",".join(
                    _fmt(v)
                    for v in (
                        row.adversary,
                        row.k_true,
                        row.ident_fail_rate,
                        row.p_err_mean,
                        row.p_err_ci95,
                    )
                )
            )
        extras["worst_adversary"] = worst.adversary
    elif mode == "cascade":
        _require(config, mode, n=config.n, rate=config.rate)
        chi, m, p_err, ci95, measurements = _run_cascade_mode(
            config, source, channels[0], seed
        )
        rows.append(
            _csv_row(
                "cascade",
                n=config.n,
                rate=config.rate,
                m=m,
                trials=config.trials,
                codebook_samples=1,
                p_err_mean=p_err,
                p_err_ci95=ci95,
                chi=chi,
                n_measurements=measurements,
                seed=seed,
            )
        )
    elif mode == "embed-dmc":
        _require(config, mode, n=config.n, rate=config.rate)
        dmc = dmc_from_source(source)
        chi_probe = holevo_quantity(source, QuantumChannel.identity(dmc.num_outputs))
        params = _params_for(config, config.n, chi_probe)
        outcome = classical_decode_experiment(
            dmc, config.n, config.rate, params, config.trials, seed, config.max_dim
        )
        result = outcome.experiment
        rows.append(
            _csv_row(
                "embed-dmc",
                n=result.n,
                rate=result.rate,
                m=result.num_messages,
                trials=result.trials,
                codebook_samples=result.codebook_samples,
                p_err_mean=result.p_err_mean,
                p_err_ci95=result.p_err_ci95,
                chi=result.chi,
                n_measurements=outcome.n_measurements,
                seed=seed,
            )
        )
    else:
        raise ConfigError(f"unknown mode '{mode}'")

    os.makedirs(out_dir, exist_ok=True)
    paths = {"results": os.path.join(out_dir, "results.csv")}
    with open(paths["results"], "w", encoding="utf-8", newline="\n") as handle:
        handle.write(CSV_HEADER + "\n")
        for row in rows:
            handle.write(row + "\n")
    if compound_rows:
        paths["compound"] = os.path.join(out_dir, "compound.csv")
        with open(paths["compound"], "w", encoding="utf-8", newline="\n") as handle:
            handle.write(COMPOUND_CSV_HEADER + "\n")
            for row in compound_rows:
                handle.write(row + "\n")
    paths["sidecar"] = os.path.join(out_dir, "run.json")
    sidecar = {
        "version": __version__,
        "mode": mode,
        "config": serialize_config(config),
        "extras": extras,
        "outputs": sorted(os.path.basename(p) for p in paths.values()),
    }
    with open(paths["sidecar"], "w", encoding="utf-8", newline="\n") as handle:
        json.dump(sidecar, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return paths


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class SelfTestReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _random_subspace(dim: int, rank: int, rng) -> Subspace:
    raw = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    q, _ = np.linalg.qr(raw)
    return Subspace(q[:, :rank], validate=False)


def self_test(corrupt: str | None = None) -> SelfTestReport:
    """Fast invariant battery; the optional hook corrupts one named check's
    tolerance so failure reporting can be exercised."""
    checks: list[CheckResult] = []

    def record(name: str, deviation: float, tolerance: float):
        if corrupt == name:
            tolerance = -1.0
        passed = deviation <= tolerance
        checks.append(
            CheckResult(name, passed, f"deviation {deviation:.3e} vs tolerance {tolerance:.1e}")
        )

    zero = DensityMatrix([[1, 0], [0, 0]])
    plus = DensityMatrix([[0.5, 0.5], [0.5, 0.5]])
    identity2 = QuantumChannel.identity(2)

    # closed-form entropy
    rho = DensityMatrix(np.diag([0.25, 0.75]))
    expected = -(0.25 * np.log2(0.25) + 0.75 * np.log2(0.75))
    record("entropy-closed-form", abs(von_neumann_entropy(rho) - expected), 1e-12)

    # Holevo quantity of the canonical binary source
    lam = 0.5 + 0.5 / np.sqrt(2.0)
    expected_chi = -(lam * np.log2(lam) + (1 - lam) * np.log2(1 - lam))
    source = CqSource([zero, plus], [0.5, 0.5])
    record(
        "holevo-binary-source",
        abs(holevo_quantity(source, identity2) - expected_chi),
        1e-9,
    )

    # spectral reconstruction on a seeded random Hermitian
    rng = stream(2024, "self-test")
    raw = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    herm = HermitianOperator((raw + raw.conj().T) / 2)
    dec = spectral_decomposition(herm)
    rebuilt = (dec.eigenvectors * dec.eigenvalues) @ dec.eigenvectors.conj().T
    record(
        "spectral-reconstruction",
        float(np.linalg.norm(rebuilt - herm.entries, ord=2)),
        1e-8,
    )

    # relative entropy vs classical KL on diagonals
    p, q = np.array([0.8, 0.2]), np.array([0.3, 0.7])
    kl = float((p * np.log2(p / q)).sum())
    div = relative_entropy(DensityMatrix(np.diag(p)), DensityMatrix(np.diag(q)))
    self_div = relative_entropy(DensityMatrix(np.diag(p)), DensityMatrix(np.diag(p)))
    record("relative-entropy-kl", max(abs(div - kl), abs(self_div)), 1e-10)

    # lattice meet sanity
    s1 = _random_subspace(8, 5, rng)
    s2 = _random_subspace(8, 6, rng)
    met_a = meet(s1, s2)
    met_b = meet(s2, s1)
    same_range = max(
        float(np.max(np.abs(met_a.basis - met_b.apply(met_a.basis)), initial=0.0)),
        float(np.max(np.abs(meet(s1, s1).basis - s1.apply(meet(s1, s1).basis)), initial=0.0)),
    )
    record("meet-lattice", same_range, 1e-8)

    # conditional typical membership vs brute enumeration
    params4 = TypicalSetParams(n=4, delta=0.5, epsilon=0.1)
    diag_state = DensityMatrix(np.diag([0.7, 0.3]))
    prod = ProductSpectral([spectral_decomposition(diag_state)] * 4)
    s_bar = von_neumann_entropy(diag_state)
    sub = conditional_typical_subspace(prod, s_bar, params4)
    logs = prod.log2_eigenvalues()
    brute = sum(
        1
        for v in logs
        if -4 * (s_bar + 0.5) <= v <= -4 * (s_bar - 0.5)
    )
    record("conditional-typical-enumeration", abs(sub.rank - brute), 0.0)

    # universal typical rank vs sequence counting
    params8 = TypicalSetParams(n=8, delta=1.0, epsilon=0.1)
    rho75 = DensityMatrix(np.diag([0.75, 0.25]))
    uni = universal_typical_subspace(rho75, params8)
    count = 0
    for code in range(2**8):
        seq = [(code >> shift) & 1 for shift in range(8)]
        count += is_p_typical([s + 1 for s in seq], [0.75, 0.25], params8)
    record("universal-typical-rank", abs(uni.rank - count), 0.0)

    # expected codeword state by exhaustive enumeration at n=3
    outputs = [DensityMatrix(np.diag([0.9, 0.1])), plus]
    prior = np.array([0.6, 0.4])
    expected_state = expected_codeword_state(prior, outputs, 3)
    total = np.zeros((8, 8), dtype=np.complex128)
    for word in np.ndindex(2, 2, 2):
        weight = float(np.prod([prior[w] for w in word]))
        dense = np.ones((1, 1), dtype=np.complex128)
        for w in word:
            dense = np.kron(dense, outputs[w].entries)
        total += weight * dense
    record(
        "expected-codeword-enumeration",
        float(np.max(np.abs(expected_state.entries - total))),
        1e-12,
    )

    # sequential decoder structure on two seeds
    mixed_source = CqSource(
        [DensityMatrix(np.diag([0.85, 0.15])), DensityMatrix(np.diag([0.2, 0.8]))],
        [0.5, 0.5],
    )
    params_povm = TypicalSetParams(n=4, delta=0.5, epsilon=0.1)
    worst_gram = 0.0
    worst_margin = 0.0
    front = universal_typical_subspace(mixed_source.mixture(), params_povm)
    s_bar_mixed = mixture_entropy_gap(mixed_source.prior, mixed_source.states)
    for seed in (1, 2):
        codebook = generate_codebook(mixed_source.prior, 4, 0.4, seed)
        states, typical, povm = decoder_for_codebook(
            codebook, list(mixed_source.states), front, s_bar_mixed, params_povm
        )
        stacked = np.hstack([p.basis for p in povm.parts + (povm.error_part,)])
        gram_dev = float(np.max(np.abs(stacked.conj().T @ stacked - np.eye(16))))
        worst_gram = max(worst_gram, gram_dev)
        for i, st in enumerate(states, start=1):
            lhs, rhs = proj_lem_bound(povm, i, st, typical[i - 1], front)
            worst_margin = max(worst_margin, rhs - lhs)
    record("povm-orthogonality", worst_gram, 1e-8)
    record("proj-lem-inequality", worst_margin, 1e-8)

    # bisection telescoping on a random padded decoder
    parts = []
    basis_rng = stream(99, "self-test-povm")
    raw = basis_rng.standard_normal((8, 8)) + 1j * basis_rng.standard_normal((8, 8))
    q, _ = np.linalg.qr(raw)
    offsets = [(0, 3), (3, 5), (5, 6)]
    parts = [Subspace(q[:, a:b], validate=False) for a, b in offsets]
    povm8 = SequentialPOVM(parts, Subspace(q[:, 6:], validate=False))
    raw_state = basis_rng.standard_normal((8, 8)) + 1j * basis_rng.standard_normal((8, 8))
    dm = raw_state @ raw_state.conj().T
    dm = DensityMatrix(dm / np.trace(dm))
    worst_tel = 0.0
    for i in range(1, 4):
        direct = project_trace(povm8.parts[i - 1], dm)
        cascade_value = cascade_success_probability(povm8, i, dm)
        worst_tel = max(worst_tel, abs(direct - cascade_value))
    record("cascade-telescoping", worst_tel, 1e-10)

    # classical encoding averages back to the codeword state at n=3
    dmc = ClassicalDMC([[0.8, 0.2], [0.2, 0.8]], [0.5, 0.5])
    word = [1, 2, 1]
    target = np.ones((1, 1), dtype=np.complex128)
    for symbol in word:
        target = np.kron(target, np.diag(dmc.transition[symbol - 1]).astype(complex))
    average = np.zeros((8, 8), dtype=np.complex128)
    for received in np.ndindex(2, 2, 2):
        weight = float(
            np.prod([dmc.transition[w - 1][r] for w, r in zip(word, received)])
        )
        average += weight * encode_output_sequence(
            [r + 1 for r in received], 2
        ).to_dense().entries
    record("dmc-expected-encoding", float(np.max(np.abs(average - target))), 1e-12)

    return SelfTestReport(tuple(checks))
