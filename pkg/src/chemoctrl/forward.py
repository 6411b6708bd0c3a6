"""IMEX time stepping for the chemo-repulsion system and its regularization.

One step of the state scheme (``L`` the Neumann Laplacian, ``C`` the
chemotaxis divergence, ``chi`` the control indicator)::

    ((1 + dt) I - dt L) v[n+1] = v[n] + dt u[n] + dt chi f[n] v[n]
    (I - dt L) u[n+1]         = u[n] + dt C(u[n], v[n+1])

v is updated first; the tangent and adjoint solvers depend on this order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np

from .grid import Grid, TimeGrid, chemo_flux_divergence, face_gradient, laplacian_neumann
from .linsolve import HelmholtzProblem, SolverError, helmholtz_solve, smoother_apply

log = logging.getLogger(__name__)


class StepError(RuntimeError):
    """A time step failed; ``step`` is the index of the level being computed."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int | None = None
    diag_scaling: bool = False
    flux: str = "central"


@dataclass
class Control:
    """Time-indexed control, one field per level, zero off the control region."""

    values: np.ndarray  # shape (steps + 1, *dims)
    grid: Grid
    timegrid: TimeGrid

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        expected = (self.timegrid.steps + 1,) + self.grid.dims
        if vals.shape != expected:
            raise ValueError(f"control shape {vals.shape}, expected {expected}")
        self.values = np.where(self.grid.control_mask, vals, 0.0)

    @classmethod
    def zeros(cls, grid, timegrid):
        return cls(np.zeros((timegrid.steps + 1,) + grid.dims), grid, timegrid)

    @classmethod
    def constant(cls, value, grid, timegrid):
        return cls(np.full((timegrid.steps + 1,) + grid.dims, float(value)), grid, timegrid)

    def copy(self, values=None):
        return Control(self.values.copy() if values is None else values, self.grid, self.timegrid)

    def __getitem__(self, n):
        return self.values[n]


@dataclass
class Trajectory:
    u: np.ndarray  # (steps + 1, *dims)
    v: np.ndarray
    grid: Grid
    timegrid: TimeGrid
    mass: np.ndarray = field(default=None)
    min_u: np.ndarray = field(default=None)
    min_v: np.ndarray = field(default=None)
    safe_dt: float = float("nan")

    def __post_init__(self):
        n = self.timegrid.steps + 1
        if len(self.u) != n or len(self.v) != n:
            raise ValueError(f"trajectory needs {n} levels")
        vol = self.grid.cell_volume
        axes = tuple(range(1, self.u.ndim))
        if self.mass is None:
            self.mass = self.u.sum(axis=axes) * vol
        if self.min_u is None:
            self.min_u = self.u.min(axis=axes)
        if self.min_v is None:
            self.min_v = self.v.min(axis=axes)


@dataclass
class RegularizedStateTriple(Trajectory):
    z: np.ndarray = field(default=None)
    eps: float = 0.0


def _solve(a, b, rhs, grid, opts, x0, step):
    try:
        return helmholtz_solve(HelmholtzProblem(a, b, rhs, opts.tol, opts.max_iter, opts.diag_scaling),
                               grid, x0=x0)
    except SolverError as exc:
        raise StepError(str(exc), step) from exc


def step(u_n, v_n, f_n, dt, grid: Grid, opts: SolverOptions = SolverOptions(), index=None):
    """One IMEX step; returns ``(u_next, v_next)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid.check(u_n, v_n, f_n)
    rhs_v = v_n + dt * u_n + dt * np.where(grid.control_mask, f_n * v_n, 0.0)
    v_next = _solve(1.0 + dt, dt, rhs_v, grid, opts, v_n, index)
    rhs_u = u_n + dt * chemo_flux_divergence(u_n, v_next, grid, opts.flux)
    u_next = _solve(1.0, dt, rhs_u, grid, opts, u_n, index)
    if not (np.all(np.isfinite(u_next)) and np.all(np.isfinite(v_next))):
        raise StepError("non-finite state", index)
    return u_next, v_next


def safe_dt(v_series, grid: Grid) -> float:
    """Advisory step bound ``min(h^2 / (4 d G h), 0.1)``, G = max face slope of v."""
    G = 0.0
    for v in v_series:
        for g in face_gradient(v, grid):
            if g.size:
                G = max(G, float(np.max(np.abs(g))))
    h = min(grid.spacing)
    if G == 0:
        return 0.1
    return min(h * h / (4 * grid.ndim * G * h), 0.1)


def _check_initial(u0, v0, grid):
    grid.check(u0, v0)
    if np.any(u0 < 0) or np.any(v0 < 0):
        raise ValueError("initial data must be nonnegative")
    if not (np.all(np.isfinite(u0)) and np.all(np.isfinite(v0))):
        raise ValueError("initial data must be finite")


def simulate(u0, v0, f: Control, timegrid: TimeGrid, grid: Grid, opts: SolverOptions = SolverOptions()) -> Trajectory:
    _check_initial(u0, v0, grid)
    N, dt = timegrid.steps, timegrid.dt
    u = np.empty((N + 1,) + grid.dims)
    v = np.empty_like(u)
    u[0], v[0] = u0, v0
    for n in range(N):
        u[n + 1], v[n + 1] = step(u[n], v[n], f.values[n], dt, grid, opts, index=n + 1)
    traj = Trajectory(u, v, grid, timegrid)
    traj.safe_dt = safe_dt(v, grid)
    if dt > traj.safe_dt:
        log.info("dt = %.3g exceeds the advisory safe dt %.3g", dt, traj.safe_dt)
    if traj.min_u.min() < 0:
        log.warning("u became negative (min %.3e)", traj.min_u.min())
    return traj


def simulate_regularized(u0, v0, f: Control, timegrid: TimeGrid, eps: float, grid: Grid,
                         opts: SolverOptions = SolverOptions()) -> RegularizedStateTriple:
    """March the (u, z) system with ``v = smoother(z, eps)`` and production ``f v_+``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    _check_initial(u0, v0, grid)
    N, dt = timegrid.steps, timegrid.dt
    u = np.empty((N + 1,) + grid.dims)
    z, v = np.empty_like(u), np.empty_like(u)
    u[0] = u0
    z[0] = v0 - eps * laplacian_neumann(v0, grid)
    v[0] = smoother_apply(z[0], eps, grid, opts.tol, opts.max_iter, x0=v0)
    for n in range(N):
        prod = np.where(grid.control_mask, f.values[n] * np.maximum(v[n], 0.0), 0.0)
        z[n + 1] = _solve(1.0 + dt, dt, z[n] + dt * u[n] + dt * prod, grid, opts, z[n], n + 1)
        v[n + 1] = smoother_apply(z[n + 1], eps, grid, opts.tol, opts.max_iter, x0=v[n])
        rhs_u = u[n] + dt * chemo_flux_divergence(u[n], v[n + 1], grid, opts.flux)
        u[n + 1] = _solve(1.0, dt, rhs_u, grid, opts, u[n], n + 1)
    traj = RegularizedStateTriple(u, v, grid, timegrid, z=z, eps=eps)
    traj.safe_dt = safe_dt(v, grid)
    return traj


def _picard_sweep(ubar, zbar, vbar, u0, z0, f, timegrid, eps, grid, opts):
    N, dt = timegrid.steps, timegrid.dt
    u, z = np.empty_like(ubar), np.empty_like(zbar)
    u[0], z[0] = u0, z0
    for n in range(N):
        prod = np.where(grid.control_mask, f.values[n] * np.maximum(vbar[n], 0.0), 0.0)
        z[n + 1] = _solve(1.0, dt, z[n] + dt * (ubar[n] + prod - zbar[n + 1]), grid, opts, zbar[n + 1], n + 1)
        rhs_u = u[n] + dt * chemo_flux_divergence(np.maximum(ubar[n], 0.0), vbar[n + 1], grid, opts.flux)
        u[n + 1] = _solve(1.0, dt, rhs_u, grid, opts, ubar[n + 1], n + 1)
    v = np.stack([smoother_apply(z[n], eps, grid, opts.tol, opts.max_iter, x0=vbar[n]) for n in range(N + 1)])
    return u, z, v


def picard_fixed_point(u0, v0, f: Control, timegrid: TimeGrid, eps: float, grid: Grid, tol: float = 1e-8,
                       max_sweeps: int = 50, opts: SolverOptions = SolverOptions()):
    """Fixed-point iteration of the decoupled linear map on whole trajectories.

    Returns ``(triple, sweeps)``; the first guess is the initial data frozen in time.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    _check_initial(u0, v0, grid)
    N = timegrid.steps
    vol = grid.cell_volume
    z0 = v0 - eps * laplacian_neumann(v0, grid)
    ubar = np.broadcast_to(u0, (N + 1,) + grid.dims).copy()
    zbar = np.broadcast_to(z0, (N + 1,) + grid.dims).copy()
    vbar = np.broadcast_to(smoother_apply(z0, eps, grid, opts.tol, opts.max_iter, x0=v0),
                           (N + 1,) + grid.dims).copy()
    axes = tuple(range(1, ubar.ndim))
    for sweep in range(1, max_sweeps + 1):
        u, z, v = _picard_sweep(ubar, zbar, vbar, u0, z0, f, timegrid, eps, grid, opts)
        # L^inf(L^2) distance between successive iterates
        diff = max(np.sqrt(np.max(np.sum((u - ubar) ** 2, axis=axes) * vol)),
                   np.sqrt(np.max(np.sum((z - zbar) ** 2, axis=axes) * vol)))
        ubar, zbar, vbar = u, z, v
        if diff <= tol:
            triple = RegularizedStateTriple(u, v, grid, timegrid, z=z, eps=eps)
            triple.safe_dt = safe_dt(v, grid)
            return triple, sweep
    raise StepError(f"Picard iteration did not converge in {max_sweeps} sweeps (last change {diff:.3e})")
