"""Spectral toolkit for small-noise stochastic evolution equations.

Controlled skeleton dynamics, stochastic simulation with exact per-mode
noise convolutions, minimum-action optimization, quasipotentials, and
Monte Carlo harnesses for exit-time and large-deviation checks.
"""

__version__ = "0.1.0"

from .bases import (
    SpectralBasis,
    SpectralField,
    NormReport,
    semigroup_apply,
    eval_on_grid,
    norms,
)
from .models import (
    DriftSpec,
    NoiseSpec,
    ModelSpec,
    drift_apply,
    ns_trilinear,
    leray_project,
    diffusion_apply,
)
from .paths import TimeGrid, ControlPath, Trajectory
from .skeleton import (
    SolverOptions,
    cutoff,
    apply_M,
    solve_skeleton,
    mild_residual,
    default_options,
)
from .simulate import (
    SimConfig,
    PathSample,
    BatchStats,
    simulate,
    simulate_controlled,
    batch_simulate,
)
from .action import (
    ActionProblem,
    ActionResult,
    QuasipotentialResult,
    TargetPoint,
    TargetBall,
    OptimizerOptions,
    action_of_control,
    minimize_action,
    quasipotential,
    level_set_probe,
)
from .ldp import (
    TubeExperiment,
    LdpReport,
    estimate_tube_probability,
    ldp_lower_bound_check,
    ldp_upper_bound_check,
    uniform_sweep,
    wilson_interval,
)
from .exits import (
    ExitDomain,
    ExitProblem,
    ExitSample,
    verify_attraction,
    sample_exit,
    exit_scaling,
    exit_place_histogram,
)
from .errors import (
    BlowUp,
    BudgetExceeded,
    NotConverged,
    PicardDiverged,
    ConfigError,
    ParseError,
    SchemaError,
    RangeError,
)
