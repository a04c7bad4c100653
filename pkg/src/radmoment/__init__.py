"""Nonlinear moment closures for grey radiative transfer in slab geometry.

The package provides the plain nonlinear closure (weight
(1 + alpha*mu)^-4 with alpha set by the flux ratio), its globally
hyperbolic regularization, eigenstructure analysis tools, a
path-conservative finite-volume solver, the benchmark problems, and a
small CLI.
"""

from .basis import (
    CouplingCoeffs,
    MonicRecurrence,
    WeightMoments,
    characteristic_speeds,
    coupling_coefficients,
    eval_basis,
    monic_recurrence,
    weight_moments,
)
from .closure import (
    MomentState,
    Realizability,
    SpectralCoeffs,
    alpha_from_flux_ratio,
    ansatz_eval,
    closure_flux,
    coeffs_to_moments,
    moments_to_coeffs,
    realizability_check,
    regularization_multipliers,
)
from .analysis import (
    HyperbolicityVerdict,
    QuasiLinearSystem,
    assemble_hmpn,
    assemble_mpn,
    classify,
    genuine_nonlinearity_indicator,
    scan_real_region,
)
from .config import SolverConfig, parse_config, render_config
from .errors import (
    AccuracyError,
    BlowUpDetected,
    DomainError,
    MeshMismatch,
    NewtonDivergence,
    ParseError,
    RadmomentError,
    RealizabilityError,
    RealizabilityWarning,
    SingularMatrixError,
    UnknownProblem,
    ValidationError,
)
from .problems import (
    Problem,
    antidiffusive_exact,
    antidiffusive_exact_moments,
    make_problem,
    riemann_free_stream_exact,
)
from .solver import (
    BoundaryCondition,
    FieldState,
    Grid,
    Material,
    PathSpec,
    RunResult,
    boundary_flux,
    convection_step,
    hll_flux,
    implicit_source_step,
    path_fluctuations,
    pn_closure_flux,
    reg_path_integral,
    run,
    source_moments,
    stable_dt,
)

__version__ = "0.1.0"
