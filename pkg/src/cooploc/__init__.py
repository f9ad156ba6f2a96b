"""Cooperative range-based sensor network localization.

Solvers that estimate unknown node positions from noisy pairwise range
measurements by projecting onto measurement balls, plus a seeded
Monte-Carlo harness that evaluates them with error-CDF and residual
metrics.
"""

from .analysis import (
    CdfCurve,
    ResidualCurve,
    RunRecord,
    average_residual,
    empirical_cdf,
    position_errors,
)
from .geometry import (
    Ball,
    DegenerateProjectionError,
    distance_to_ball,
    project_ball,
    project_sphere,
)
from .harness import ExperimentConfig, load_config, plot_data, run_experiment
from .network import (
    ConnectivityStats,
    DeploymentConfig,
    ErrorModel,
    GenerationError,
    Scenario,
    connectivity_stats,
    corner_center_layout,
    corner_layout,
    generate_scenario,
    measure_range,
)
from .solvers import (
    DegenerateNodeError,
    IterationTrace,
    NumericalFailureError,
    SolverConfig,
    block_gradient,
    block_lipschitz,
    objective_f,
    objective_projection_form,
    ppm_update_node,
    solve_pocs,
    solve_ppb,
    solve_ppm,
)

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "CdfCurve",
    "ConnectivityStats",
    "DegenerateNodeError",
    "DegenerateProjectionError",
    "DeploymentConfig",
    "ErrorModel",
    "ExperimentConfig",
    "GenerationError",
    "IterationTrace",
    "NumericalFailureError",
    "ResidualCurve",
    "RunRecord",
    "Scenario",
    "SolverConfig",
    "average_residual",
    "block_gradient",
    "block_lipschitz",
    "connectivity_stats",
    "corner_center_layout",
    "corner_layout",
    "distance_to_ball",
    "empirical_cdf",
    "generate_scenario",
    "load_config",
    "measure_range",
    "objective_f",
    "objective_projection_form",
    "plot_data",
    "position_errors",
    "ppm_update_node",
    "project_ball",
    "project_sphere",
    "run_experiment",
    "solve_pocs",
    "solve_ppb",
    "solve_ppm",
    "__version__",
]
