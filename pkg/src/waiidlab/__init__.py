"""Desk-scale numerical laboratory for concentration phenomena of weakly
almost i.i.d. quantum sources."""

from .core import (
    DensityOperator,
    Observable,
    POVM,
    StateN,
    ValidationError,
    eigh,
    entanglement_fidelity,
    load_state,
    partial_trace,
    relative_entropy,
    save_state,
    spectral_projector,
    trace_norm,
    von_neumann_entropy,
)
from .sources import (
    DefectReport,
    SourceSpec,
    expected_purity_exact,
    generate,
    haar_defect_bound,
    haar_state,
    parse_source,
    waiid_defect,
)
from .typicality import (
    ImplicitLevelProjector,
    SigmaQ,
    build_sigma_q,
    chebyshev_tail,
    empirical_moments,
    projector_logdim,
    projector_weight,
    typical_projector,
)
from .protocols import (
    CompressionScheme,
    SteinTest,
    build_compression,
    build_stein_test,
    compression_fidelity,
    dh_epsilon_oracle,
    stein_errors,
)
from .manybody import (
    FrequencyReport,
    GGESpec,
    frequency_concentration,
    gge_state,
    gge_typicality,
    joint_concentration,
    sample_outcomes,
)
from .entropies import (
    SpectralCurve,
    projector_rate_certificate,
    smooth_zero_renyi,
    spectral_curve,
    sup_entropy_estimate,
)

__version__ = "0.1.0"
