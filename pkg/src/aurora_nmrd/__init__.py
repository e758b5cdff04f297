"""Joint fitting of NMRD profiles: correlation-time distribution, constant
offset and quadrupolar relaxation peaks, with an automatically balanced
L1 regularization parameter."""

from .aurora import (
    DegenerateSolutionError,
    FitResult,
    GsState,
    GsTrace,
    OuterHistory,
    SolverConfig,
    aurora_solve,
    bp_update,
    canonical_order,
    gs_solve,
    init_quad_params,
)
from .fileio import RunConfig, read_profile, write_profile
from .model import (
    CorrelationGrid,
    InvalidInputError,
    Kernel,
    LinearBlock,
    NmrdProfile,
    QuadBounds,
    QuadParams,
    build_kernel,
    eval_quad,
    evaluate_model,
    objective,
    quad_jacobian,
)
from .solvers import (
    BcnlsProblem,
    L1nnlsProblem,
    SolveDiagnostics,
    solve_bcnls,
    solve_l1nnls,
)
from .synth import (
    McReport,
    NoiseSpec,
    ReferenceScenario,
    add_noise,
    default_bounds,
    default_scenario,
    mse,
    pre,
    run_monte_carlo,
    synthesize_profile,
)

__version__ = "0.1.0"
