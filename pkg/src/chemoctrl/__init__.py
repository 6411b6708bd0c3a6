"""Simulation, adjoints and optimal bilinear control for a chemo-repulsion system."""
from .grid import (Grid, TimeGrid, chemo_flux_divergence, integrate, laplacian_neumann, lp_norm,
                   spacetime_lp_norm)
from .linsolve import HelmholtzProblem, SolverError, helmholtz_solve, smoother_apply
from .forward import (Control, RegularizedStateTriple, SolverOptions, StepError, Trajectory, picard_fixed_point,
                      simulate, simulate_regularized, step)
from .objective import AdmissibleBox, ObjectiveWeights, TargetData, evaluate_objective, project
from .adjoint import AdjointPair, TangentPair, control_gradient, solve_adjoint, solve_linearized
from .optimizer import OptimizerOptions, fixed_point_control_update, optimize
from .diagnostics import DiagnosticsReport, entropy_energy, mass_drift, regularity_norm, strong_residual

__all__ = [
    "Grid",
    "TimeGrid",
    "chemo_flux_divergence",
    "integrate",
    "laplacian_neumann",
    "lp_norm",
    "spacetime_lp_norm",
    "HelmholtzProblem",
    "SolverError",
    "helmholtz_solve",
    "smoother_apply",
    "Control",
    "RegularizedStateTriple",
    "SolverOptions",
    "StepError",
    "Trajectory",
    "picard_fixed_point",
    "simulate",
    "simulate_regularized",
    "step",
    "AdmissibleBox",
    "ObjectiveWeights",
    "TargetData",
    "evaluate_objective",
    "project",
    "AdjointPair",
    "TangentPair",
    "control_gradient",
    "solve_adjoint",
    "solve_linearized",
    "OptimizerOptions",
    "fixed_point_control_update",
    "optimize",
    "DiagnosticsReport",
    "entropy_energy",
    "mass_drift",
    "regularity_norm",
    "strong_residual",
    "__version__",
]

__version__ = "0.1.0"
