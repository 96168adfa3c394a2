"""Self-propelled swarm simulation with ambient pair forces and leader feedback.

The package splits into the model (forces, potentials, energy), analytic
leader trajectories, the integrator and run loop, run metrics and the
flocking classifier, closed-form stability theory with its checkers,
control-parameter sweeps with a constrained optimizer, and the TOML
configuration schema behind the ``dpdflock`` command-line tool.
"""
from .config import ConfigError, config_as_dict, config_from_dict, dump_config, load_config, loads_config
from .engine import (
    DIVERGENCE_LIMIT,
    InitSpec,
    IntegrationError,
    RunConfig,
    TrajectoryRecord,
    run,
    sample_initial,
    verlet_step,
)
from .leader import (
    ArcSegment,
    Circle,
    ConstAccelSegment,
    LeaderState,
    LeaderTrajectory,
    Mission,
    UniformLine,
    accel_bound,
    build_mission,
    leader_state,
)
from .metrics import (
    FlockVerdict,
    TaskFunctionals,
    body_speed,
    classify_flocking,
    group_density,
    q_dev,
    task_functionals,
    v_dev,
)
from .model import (
    CoincidentAgentsError,
    ControlParams,
    GeneratingFunctionSpec,
    ModelParams,
    SwarmState,
    accelerations,
    attractive_potential,
    attractor_residual,
    conservative_pair,
    dissipative_pair,
    energy_rate_rhs,
    laplacian_quadform,
    position_alignment,
    repulsive_potential,
    total_energy,
    velocity_alignment,
    weight_c,
)
from .sweep import (
    CONTROL_AXES,
    REGIME_TABLE,
    SWEEP_HEADER,
    GridSpec,
    MarginalSurface,
    SweepRecord,
    constrained_argmin,
    format_sweep_row,
    make_grid,
    marginalize,
    parse_sweep_rows,
    read_sweep_table,
    regime_preset,
    run_sweep,
)
from .theory import (
    BoundCheck,
    BoundReport,
    DecayCheck,
    EnvelopeError,
    LinearEnvelope,
    MonotonicityResult,
    bound_report,
    check_bounds,
    decay_check,
    eigenvalues,
    envelope,
    monotonicity_check,
    wobbler_admissible,
    wobbler_closed_form,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # model
    "CoincidentAgentsError",
    "GeneratingFunctionSpec",
    "ModelParams",
    "ControlParams",
    "SwarmState",
    "weight_c",
    "conservative_pair",
    "dissipative_pair",
    "position_alignment",
    "velocity_alignment",
    "accelerations",
    "repulsive_potential",
    "attractive_potential",
    "total_energy",
    "energy_rate_rhs",
    "laplacian_quadform",
    "attractor_residual",
    # leader
    "LeaderState",
    "UniformLine",
    "Circle",
    "ConstAccelSegment",
    "ArcSegment",
    "Mission",
    "LeaderTrajectory",
    "leader_state",
    "accel_bound",
    "build_mission",
    # engine
    "DIVERGENCE_LIMIT",
    "InitSpec",
    "RunConfig",
    "TrajectoryRecord",
    "IntegrationError",
    "sample_initial",
    "verlet_step",
    "run",
    # metrics
    "FlockVerdict",
    "TaskFunctionals",
    "q_dev",
    "v_dev",
    "task_functionals",
    "group_density",
    "body_speed",
    "classify_flocking",
    # theory
    "EnvelopeError",
    "LinearEnvelope",
    "BoundReport",
    "BoundCheck",
    "DecayCheck",
    "MonotonicityResult",
    "envelope",
    "eigenvalues",
    "bound_report",
    "check_bounds",
    "decay_check",
    "wobbler_closed_form",
    "wobbler_admissible",
    "monotonicity_check",
    # sweep
    "GridSpec",
    "SweepRecord",
    "MarginalSurface",
    "SWEEP_HEADER",
    "CONTROL_AXES",
    "REGIME_TABLE",
    "make_grid",
    "run_sweep",
    "marginalize",
    "constrained_argmin",
    "regime_preset",
    "format_sweep_row",
    "parse_sweep_rows",
    "read_sweep_table",
    # config
    "ConfigError",
    "load_config",
    "loads_config",
    "config_from_dict",
    "config_as_dict",
    "dump_config",
]
