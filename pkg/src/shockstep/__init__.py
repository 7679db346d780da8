"""Goal-oriented time step control for scalar conservation laws.

First order finite volume transport with an adjoint-weighted split of the
functional error into time and space parts, and a density-driven loop that
retiles the time axis between mesh levels.
"""

from .adaptivity import (AdaptationConfig, AdaptationPlan, LevelReport,
                         PlanStats, SpeedProfile, adaptive_loop, assign_modes,
                         propose_timesteps, speed_for_basis,
                         tolerance_schedule)
from .dual import (CoefficientField, DualGradientTrajectory,
                   build_coefficient_field, dual_flux, sample_w,
                   solve_dual_gradient)
from .estimator import (ErrorBreakdown, assemble_breakdown, cell_space_error,
                        cell_time_error, efficiency_index,
                        evaluate_functional, reference_functional,
                        weight_cell_integrals)
from .forward import (BURGERS, BurgersFlux, LinearFlux, NewtonStats,
                      NonConvergence, SolverFailure, ForwardTrajectory,
                      eo_flux, explicit_step, implicit_step, interface_fluxes,
                      max_wave_speed, run_forward)
from .grid import (EXPLICIT, IMPLICIT, SpatialGrid, TimePartition,
                   build_spatial_grid, cfl_of_step, uniform_partition)
from .testcase import (CharacteristicsReport, PerturbedShockCase,
                       validate_characteristics)

__version__ = "0.1.0"

__all__ = [
    "AdaptationConfig", "AdaptationPlan", "LevelReport", "PlanStats",
    "SpeedProfile", "adaptive_loop", "assign_modes", "propose_timesteps",
    "speed_for_basis", "tolerance_schedule",
    "CoefficientField", "DualGradientTrajectory", "build_coefficient_field",
    "dual_flux", "sample_w", "solve_dual_gradient",
    "ErrorBreakdown", "assemble_breakdown", "cell_space_error",
    "cell_time_error", "efficiency_index", "evaluate_functional",
    "reference_functional", "weight_cell_integrals",
    "BURGERS", "BurgersFlux", "LinearFlux", "NewtonStats", "NonConvergence",
    "SolverFailure", "ForwardTrajectory", "eo_flux", "explicit_step",
    "implicit_step", "interface_fluxes", "max_wave_speed", "run_forward",
    "EXPLICIT", "IMPLICIT", "SpatialGrid", "TimePartition",
    "build_spatial_grid", "cfl_of_step", "uniform_partition",
    "CharacteristicsReport", "PerturbedShockCase", "validate_characteristics",
    "__version__",
]
