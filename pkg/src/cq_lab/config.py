"""Experiment configuration: a single JSON document drives every mode.

Complex matrices are written as nested arrays of [re, im] pairs; this is the
only external data format.  Validation failures name the offending field and
constraint.
"""

import json
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from .errors import CqLabError, ConfigError
from .quantum_core import CqSource, DensityMatrix, QuantumChannel

MODES = ("entropy", "capacity", "single", "sweep-n", "compound", "cascade", "embed-dmc")
ENV_MAX_DIM = "CQ_LAB_MAX_DIM"

DEFAULT_DELTA = 0.5
DEFAULT_TRIALS = 1000
DEFAULT_CODEBOOK_SAMPLES = 50
DEFAULT_SEED = 0
DEFAULT_GRID_RESOLUTION = 20
DEFAULT_CONFIG_MAX_DIM = 4096


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Validated run description; matrices are kept as raw complex arrays."""

    mode: str | None
    source_states: tuple
    prior: np.ndarray
    channels: tuple
    n: int | None = None
    n_range: tuple | None = None
    rate: float | None = None
    epsilon: float | None = None
    delta: float = DEFAULT_DELTA
    trials: int = DEFAULT_TRIALS
    codebook_samples: int = DEFAULT_CODEBOOK_SAMPLES
    seed: int = DEFAULT_SEED
    max_dim: int = DEFAULT_CONFIG_MAX_DIM
    grid_resolution: int = DEFAULT_GRID_RESOLUTION

    def build_source(self) -> CqSource:
        return CqSource([DensityMatrix(s) for s in self.source_states], self.prior)

    def build_channels(self) -> list[QuantumChannel]:
        return [QuantumChannel(kraus) for kraus in self.channels]

    def __eq__(self, other):
        if not isinstance(other, ExperimentConfig):
            return NotImplemented
        return serialize_config(self) == serialize_config(other)


def _complex_matrix(raw, path: str) -> np.ndarray:
    try:
        arr = np.array(raw, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a numeric nested array ({exc})") from None
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ConfigError(
            f"{path}: expected a matrix of [re, im] pairs, got shape {arr.shape}"
        )
    return arr[..., 0] + 1j * arr[..., 1]


def _matrix_to_pairs(matrix: np.ndarray) -> list:
    return [
        [[float(entry.real), float(entry.imag)] for entry in row]
        for row in np.asarray(matrix, dtype=np.complex128)
    ]


def _expect(document: dict, key: str, kind, default=None, required=False):
    if key not in document:
        if required:
            raise ConfigError(f"missing required field '{key}'")
        return default
    value = document[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigError(f"field '{key}' must be {kind.__name__}, got bool")
    if not isinstance(value, kind):
        raise ConfigError(
            f"field '{key}' must be {getattr(kind, '__name__', kind)}, got {type(value).__name__}"
        )
    return value


def parse_config(document: dict, *, honor_env: bool = False) -> ExperimentConfig:
    """Validate a decoded JSON document into an ExperimentConfig.

    With ``honor_env`` the CQ_LAB_MAX_DIM override is applied before the
    dimension-cap checks run.
    """
    if not isinstance(document, dict):
        raise ConfigError("configuration root must be a JSON object")
    mode = _expect(document, "mode", str)
    if mode is not None and mode not in MODES:
        raise ConfigError(f"mode '{mode}' is not one of {', '.join(MODES)}")
    source = _expect(document, "source", dict, required=True)
    raw_states = source.get("states")
    if not isinstance(raw_states, list) or not raw_states:
        raise ConfigError("source.states must be a nonempty list of matrices")
    states = tuple(
        _complex_matrix(raw, f"source.states[{i}]") for i, raw in enumerate(raw_states)
    )
    if "prior" not in source:
        raise ConfigError("missing required field 'source.prior'")
    prior = np.array(source["prior"], dtype=np.float64)
    channels_raw = _expect(document, "channels", list)
    if channels_raw is None:
        dim = states[0].shape[0]
        channels = ((np.eye(dim, dtype=np.complex128),),)
    else:
        channels = tuple(
            tuple(
                _complex_matrix(k, f"channels[{i}][{j}]")
                for j, k in enumerate(kraus_set)
            )
            for i, kraus_set in enumerate(channels_raw)
        )
        if not channels:
            raise ConfigError("channels must contain at least one Kraus set")
    n = _expect(document, "n", int)
    n_range_raw = _expect(document, "n_range", list)
    n_range = None
    if n_range_raw is not None:
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in n_range_raw):
            raise ConfigError("n_range must be a list of integers")
        n_range = tuple(n_range_raw)
    config = ExperimentConfig(
        mode=mode,
        source_states=states,
        prior=prior,
        channels=channels,
        n=n,
        n_range=n_range,
        rate=_expect(document, "rate", float),
        epsilon=_expect(document, "epsilon", float),
        delta=_expect(document, "delta", float, default=DEFAULT_DELTA),
        trials=_expect(document, "trials", int, default=DEFAULT_TRIALS),
        codebook_samples=_expect(
            document, "codebook_samples", int, default=DEFAULT_CODEBOOK_SAMPLES
        ),
        seed=_expect(document, "seed", int, default=DEFAULT_SEED),
        max_dim=_expect(document, "max_dim", int, default=DEFAULT_CONFIG_MAX_DIM),
        grid_resolution=_expect(
            document, "grid_resolution", int, default=DEFAULT_GRID_RESOLUTION
        ),
    )
    if honor_env:
        config = apply_env_max_dim(config)
    _validate_semantics(config)
    return config


def _validate_semantics(config: ExperimentConfig):
    try:
        source = config.build_source()
    except CqLabError as exc:
        message = str(exc)
        if "prior" in message:
            raise ConfigError(f"source.prior: {message}") from None
        raise ConfigError(f"source.states: {message}") from None
    try:
        channels = config.build_channels()
    except CqLabError as exc:
        raise ConfigError(f"channels: {exc}") from None
    for ch in channels:
        if ch.in_dim != source.dim:
            raise ConfigError(
                f"channels: input dimension {ch.in_dim} does not match source dimension {source.dim}"
            )
    if config.delta <= 0:
        raise ConfigError(f"delta must be positive, got {config.delta}")
    if config.epsilon is not None and config.epsilon <= 0:
        raise ConfigError(f"epsilon must be positive, got {config.epsilon}")
    if config.trials < 1:
        raise ConfigError(f"trials must be at least 1, got {config.trials}")
    if config.codebook_samples < 1:
        raise ConfigError(
            f"codebook_samples must be at least 1, got {config.codebook_samples}"
        )
    if config.max_dim < 1:
        raise ConfigError(f"max_dim must be positive, got {config.max_dim}")
    if config.grid_resolution < 1:
        raise ConfigError(
            f"grid_resolution must be at least 1, got {config.grid_resolution}"
        )
    out_dim = channels[0].out_dim
    for n in ([config.n] if config.n else []) + list(config.n_range or ()):
        if n < 1:
            raise ConfigError(f"block length must be at least 1, got {n}")
        if out_dim**n > config.max_dim:
            raise ConfigError(
                f"n={n} gives product dimension {out_dim}^{n} = {out_dim ** n}, "
                f"exceeding max_dim {config.max_dim}"
            )


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a JSON configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return parse_config(document, honor_env=True)


def serialize_config(config: ExperimentConfig) -> dict:
    """JSON-ready document; parse_config(serialize_config(c)) == c."""
    document = {
        "source": {
            "states": [_matrix_to_pairs(s) for s in config.source_states],
            "prior": [float(p) for p in config.prior],
        },
        "channels": [
            [_matrix_to_pairs(k) for k in kraus_set] for kraus_set in config.channels
        ],
        "delta": config.delta,
        "trials": config.trials,
        "codebook_samples": config.codebook_samples,
        "seed": config.seed,
        "max_dim": config.max_dim,
        "grid_resolution": config.grid_resolution,
    }
    if config.mode is not None:
        document["mode"] = config.mode
    if config.n is not None:
        document["n"] = config.n
    if config.n_range is not None:
        document["n_range"] = list(config.n_range)
    if config.rate is not None:
        document["rate"] = config.rate
    if config.epsilon is not None:
        document["epsilon"] = config.epsilon
    return document


def apply_env_max_dim(config: ExperimentConfig) -> ExperimentConfig:
    """Honor the CQ_LAB_MAX_DIM override, warning when it raises the cap."""
    raw = os.environ.get(ENV_MAX_DIM)
    if raw is None:
        return config
    try:
        override = int(raw)
    except ValueError:
        raise ConfigError(f"{ENV_MAX_DIM} must be an integer, got {raw!r}") from None
    if override < 1:
        raise ConfigError(f"{ENV_MAX_DIM} must be positive, got {override}")
    if override > config.max_dim:
        print(
            f"warning: {ENV_MAX_DIM}={override} raises the dimension cap above "
            f"{config.max_dim}; dense decompositions may be slow",
            file=sys.stderr,
        )
    return replace(config, max_dim=override)
