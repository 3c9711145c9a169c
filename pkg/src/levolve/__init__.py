"""Numerical laboratory for action-cost optimal transport on evolving
circle and sphere geometries, with monotonicity and convexity monitors.
"""

__version__ = "0.1.0"

from ._backend import backend_name
from .errors import (
    ConfigError,
    ConjugatePoint,
    DomainError,
    InvalidFieldEntry,
    LevolveError,
    NearCutLocus,
    NegativeDensity,
    NoConvergence,
    NonFiniteCost,
    NonPositiveDensity,
    ParseError,
    SemanticError,
    StabilityError,
    TransportInfeasible,
)
from .geometry import (
    FlowModel,
    Geometry,
    build_geometry,
    dilaton_circle,
    flat_circle,
    load_table,
    round_sphere,
)
from .geodesics import (
    DiscreteCurve,
    GeodesicResult,
    LDistanceField,
    exp_curve,
    harnack_integral,
    l_distance,
    l_distance_field,
    l_distance_partials,
    l_exp,
    l_length,
    log_jacobian_series,
)
from .diffusion import (
    DiffusionState,
    DiffusionTable,
    bump_profile,
    evolve_density,
    initial_state,
    tabulate_diffusion,
)
from .transport import (
    DiscreteMeasure,
    TransportPlan,
    cost_matrix,
    dirac,
    l_wasserstein,
    measure_from_density,
    push_forward_geodesic,
    renormalized_cost,
    solve_transport,
    verify_dual_certificate,
)
from .monitors import (
    MonitorSeries,
    convexity_profile,
    distance_identity_check,
    plan_bound_check,
    prekopa_leindler_check,
    reduced_volume,
    renormalized_cost_series,
    scaled_distance_gap,
    shannon_entropy,
    w_entropy,
    w_entropy_series,
)
