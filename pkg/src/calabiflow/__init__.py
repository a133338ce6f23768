"""Numerical laboratory for finite-time Kahler-Ricci flow singularities on
projective bundles with Calabi symmetry."""

from .blowup import BlowupVerdict, classify_limit, exterior_flatness, typeI_rescale
from .diagnostics import (
    EstimateReport,
    MonotonicityAudit,
    PotentialTrack,
    auto_weight,
    estimate_sweep,
    monotonicity_audit,
    potential_track,
    vertex_geometry,
    weight_eta,
)
from .errors import (
    BracketError,
    CalabiflowError,
    ConeViolation,
    FormulaMismatch,
    Inconclusive,
    InvalidGrid,
    NumericalBlowup,
    PositivityLoss,
    VertexAtBoundary,
    WrongSingularityType,
)
from .flow import (
    ClassPath,
    FlowState,
    RunRecord,
    StepController,
    class_path,
    compute_dt,
    make_state,
    rescale_to_unit_time,
    rhs_dphi,
    run,
    step,
)
from .geometry import (
    CurvatureProxies,
    GeometryFields,
    curvature_proxies,
    diam_cp_factor,
    fibre_diameter,
    geometry_fields,
    radial_distance,
    radial_gradient_sq,
    radial_laplacian,
    ricci_potential,
    scalar_curvature,
    volume,
)
from .profile import (
    BundleConfig,
    Grid,
    KahlerClass,
    Profile,
    ValidationReport,
    differentiate,
    initial_profile,
    make_grid,
    validate_cone,
)
from .soliton import (
    SolitonProfile,
    compact_soliton_constant,
    compact_soliton_profile,
    flow_to_momentum,
    momentum_interpolator,
    shooting_integral,
    solve_c_star,
    soliton_profile,
    soliton_w,
)

__version__ = "0.1.0"
