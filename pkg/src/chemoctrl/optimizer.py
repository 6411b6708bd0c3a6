"""Projected-gradient optimization of the bilinear control problem."""
from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np

from .adjoint import AdjointPair, control_gradient, quadrature_inner, solve_adjoint
from .forward import Control, SolverOptions, Trajectory, simulate
from .grid import Grid, TimeGrid
from .objective import AdmissibleBox, ObjectiveWeights, TargetData, evaluate_objective, project

log = logging.getLogger(__name__)


class LineSearchError(RuntimeError):
    """Armijo backtracking exhausted; ``result`` carries the last accepted iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class OptimizerOptions:
    tol_opt: float = 1e-6
    relative: bool = True  # stop on residual <= tol_opt * initial residual
    max_iter: int = 100
    tau0: float = 1.0
    backtrack: float = 0.5
    c1: float = 1e-4
    max_backtracks: int = 40
    initial_control: Control | None = None


@dataclass
class OptimizationReport:
    J: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    step: list = field(default_factory=list)
    backtracks: list = field(default_factory=list)
    converged: bool = False
    message: str = ""

    def rows(self):
        """Iteration log rows ``(iter, J, residual, step, backtracks)``."""
        for k, (J, r) in enumerate(zip(self.J, self.residual)):
            s = self.step[k - 1] if k > 0 else 0.0
            b = self.backtracks[k - 1] if k > 0 else 0
            yield k, J, r, s, b


@dataclass
class OptimizationResult:
    control: Control
    trajectory: Trajectory
    adjoint: AdjointPair
    gradient: Control
    report: OptimizationReport


def control_norm(f: Control, p: float = 2.0) -> float:
    """``||f||_{L^p(Q_c)}`` with the objective's quadrature."""
    w = f.timegrid.weights()
    axes = tuple(range(1, f.values.ndim))
    level = np.sum(np.abs(f.values) ** p, axis=axes)
    return float((np.sum(w * level) * f.timegrid.dt * f.grid.cell_volume) ** (1.0 / p))


def projected_residual(f: Control, g: Control, box: AdmissibleBox) -> float:
    """``||f - P(f - g)||_{L^2(Q_c)}``; vanishes exactly at stationary points."""
    return control_norm(f.copy(f.values - project(f.copy(f.values - g.values), box).values))


def variational_residual(f_star: Control, g: Control, f: Control) -> float:
    """``<g, f - f_star>_Q`` for a trial control ``f``; nonnegative at a box-constrained optimum."""
    return quadrature_inner(g.values, f.values - f_star.values, f.grid, f.timegrid)


def fixed_point_control_update(v, eta, weights: ObjectiveWeights, box: AdmissibleBox, grid: Grid,
                               timegrid: TimeGrid) -> Control:
    """Pointwise stationarity solve ``f = cbrt(-v eta / alpha_f)``, then projection."""
    if not weights.alpha_f > 0:
        raise ValueError("fixed-point control update needs alpha_f > 0")
    f = np.cbrt(-np.asarray(v) * np.asarray(eta) / weights.alpha_f)
    return project(Control(f, grid, timegrid), box)


class _Problem:
    """Reduced objective ``f -> J(S(f), f)`` with cached state."""

    def __init__(self, u0, v0, targets, weights, grid, timegrid, solver):
        self.u0, self.v0 = u0, v0
        self.targets, self.weights = targets, weights
        self.grid, self.timegrid, self.solver = grid, timegrid, solver

    def value(self, f):
        traj = simulate(self.u0, self.v0, f, self.timegrid, self.grid, self.solver)
        return evaluate_objective(traj, f, self.targets, self.weights), traj

    def gradient(self, f, traj):
        adj = solve_adjoint(traj, f, self.targets, self.weights, self.solver)
        return control_gradient(f, traj, adj, self.weights), adj


def reduced_gradient(u0, v0, f, targets, weights, grid, timegrid, solver=SolverOptions()):
    """Objective value, Riesz gradient, trajectory and adjoint at ``f``."""
    prob = _Problem(u0, v0, targets, weights, grid, timegrid, solver)
    J, traj = prob.value(f)
    g, adj = prob.gradient(f, traj)
    return J, g, traj, adj


def optimize(u0, v0, targets: TargetData, weights: ObjectiveWeights, box: AdmissibleBox, timegrid: TimeGrid,
             grid: Grid, opts: OptimizerOptions = OptimizerOptions(), solver: SolverOptions = SolverOptions()):
    """Projected gradient descent with Armijo backtracking along the projection arc.

    A trial ``f+ = P(f - tau g)`` is accepted when
    ``J(f+) <= J(f) - (c1 / tau) ||f+ - f||^2`` (equal to ``c1 tau ||g||^2``
    while the box is inactive).  Returns an :class:`OptimizationResult`.
    """
    box.validate(weights)
    prob = _Problem(u0, v0, targets, weights, grid, timegrid, solver)
    f = project(opts.initial_control if opts.initial_control is not None else Control.zeros(grid, timegrid), box)
    J, traj = prob.value(f)
    g, adj = prob.gradient(f, traj)
    report = OptimizationReport()
    res = projected_residual(f, g, box)
    res0 = res
    report.J.append(J)
    report.residual.append(res)
    threshold = opts.tol_opt * res0 if opts.relative else opts.tol_opt

    def result():
        return OptimizationResult(f, traj, adj, g, report)

    for k in range(opts.max_iter):
        if res <= threshold:
            report.converged = True
            report.message = f"converged after {k} iterations"
            return result()
        tau = opts.tau0
        for nb in range(opts.max_backtracks + 1):
            f_new = project(f.copy(f.values - tau * g.values), box)
            step_sq = control_norm(f_new.copy(f_new.values - f.values)) ** 2
            J_new, traj_new = prob.value(f_new)
            if J_new <= J - opts.c1 / tau * step_sq and (J_new < J or step_sq == 0):
                break
            tau *= opts.backtrack
        else:
            report.message = f"line search failed at iteration {k} (tau = {tau:.3e})"
            raise LineSearchError(report.message, result())
        f, J, traj = f_new, J_new, traj_new
        g, adj = prob.gradient(f, traj)
        res = projected_residual(f, g, box)
        report.J.append(J)
        report.residual.append(res)
        report.step.append(tau)
        report.backtracks.append(nb)
        log.debug("iter %d J=%.6e res=%.3e tau=%.2e", k + 1, J, res, tau)
    report.converged = res <= threshold
    report.message = "converged" if report.converged else f"iteration cap {opts.max_iter} reached"
    return result()


def fixed_point_iteration(u0, v0, targets, weights, box, timegrid, grid, initial: Control | None = None,
                          max_iter: int = 50, tol: float = 1e-10, solver=SolverOptions()):
    """Alternate forward/adjoint solves with :func:`fixed_point_control_update`.

    Returns ``(control, trajectory, adjoint, changes)``; ``changes`` is the
    L^2(Q_c) distance between successive controls.
    """
    f = project(initial if initial is not None else Control.zeros(grid, timegrid), box)
    changes = []
    for _ in range(max_iter):
        _, _, traj, adj = reduced_gradient(u0, v0, f, targets, weights, grid, timegrid, solver)
        f_new = fixed_point_control_update(traj.v, adj.eta, weights, box, grid, timegrid)
        changes.append(control_norm(f_new.copy(f_new.values - f.values)))
        f = f_new
        if changes[-1] <= tol:
            break
    _, _, traj, adj = reduced_gradient(u0, v0, f, targets, weights, grid, timegrid, solver)
    return f, traj, adj, changes
