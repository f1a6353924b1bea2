"""mflab: a numerical laboratory for scale-invariant intermittency.

Cantor staircases and their valuations, inversion-rule jump dynamics,
multiplicative cascades, stochastic relaxation flows, and the structure
function / spectrum analysis that ties them together.
"""

__version__ = "0.1.0"

from .analysis import (
    ConcavityReport,
    ScalingFit,
    Spectrum,
    StructureFunctionTable,
    average_tables,
    concavity_report,
    fit_exponents,
    flatness,
    legendre_D_from_xi,
    legendre_xi_from_D,
    structure_functions,
)
from .errors import (
    DomainError,
    MfLabError,
    NumericError,
    ResourceLimitError,
    ValidationError,
)
from .fractal import (
    Cover,
    DimensionEstimate,
    IfsSpec,
    box_counting_dimension,
    build_cover,
    sample_gap_crossings,
    similarity_dimension,
    staircase_eval,
    staircase_profile,
)
from .generators import (
    CascadeSpec,
    MeasureGrid,
    VelocitySeries,
    analytic_zeta,
    brownian_baseline,
    build_cascade,
    synthesize_inversion_jumps,
    synthesize_subordinated,
)
from .langevin import (
    LangevinParams,
    Trajectory,
    correlated_time,
    ensemble_moments,
    ensemble_paths,
    exact_relaxation,
    integrate_langevin,
    integrate_linear,
    log_flow_residual,
    moment_exponent,
    reynolds,
    scale_invariant_solution,
)
from .valuation import (
    ConservationCheck,
    InversionJump,
    RelativeInfinitesimal,
    cascade_dimension,
    deform,
    family_valuation,
    finite_valuation,
    inversion_image,
    inverted_cascade_dimension,
    linear_increment,
    measure_conservation_residual,
    scale_invariant_increment,
    staircase_valuation,
    ultrametric_defect,
    valuation_exponent,
)
