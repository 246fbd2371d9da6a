"""cq-lab: desk-scale classical-quantum channel coding experiments.

Dense linear algebra for density matrices and projector subspaces, random
codebooks decoded by a sequentially orthogonalized von Neumann measurement,
finite compound-channel coding, and the binary bisection measurement cascade
with its classical-channel embedding.
"""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConfigError,
    CqLabError,
    DimensionMismatchError,
    SupportError,
    ValidationError,
)
from .quantum_core import (
    INFINITE_DIVERGENCE,
    CqSource,
    DensityMatrix,
    HermitianOperator,
    QuantumChannel,
    SpectralDecomposition,
    Subspace,
    apply_channel,
    holevo_quantity,
    kron_power,
    meet,
    project_trace,
    relative_entropy,
    spectral_decomposition,
    tensor,
    von_neumann_entropy,
)
from .typicality import (
    ProductSpectral,
    TypicalSetParams,
    conditional_typical_subspace,
    is_eps_typical_codeword,
    is_p_typical,
    relative_typical_subspace,
    typical_pair,
    universal_typical_subspace,
)
from .codec import (
    Codebook,
    ProductState,
    SequentialPOVM,
    build_sequential_povm,
    expected_codeword_state,
    generate_codebook,
    proj_lem_bound,
    quantum_codeword,
)
from .simulator import (
    ErrorExperimentResult,
    MeasurementOutcome,
    measure,
    run_error_experiment,
    success_probability,
)
from .compound import (
    CompoundChannelSet,
    DiscriminationCascade,
    build_compound_message_povm,
    build_discrimination_cascade,
    compound_holevo,
    identify_mixed_state,
    optimize_prior,
    run_compound_experiment,
)
from .cascade import (
    AggregatedProjector,
    ClassicalDMC,
    bisect_decode,
    cascade_success_probability,
    classical_decode_experiment,
    embed_dmc,
    encode_output_sequence,
    pad_povm,
)
