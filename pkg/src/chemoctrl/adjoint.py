"""Tangent-linear and adjoint solvers for the discrete state scheme.

The tangent marches the exact derivative of :func:`forward.step`; the adjoint is
its transpose (discretize-then-optimize).  Source terms ``g[n]`` and the
control direction ``F[n]`` enter the step ``n -> n+1`` explicitly, like the
bilinear term of the forward scheme, so level ``N`` never feeds the dynamics.

Adjoint fields are stored at the level of the step they belong to and scaled
by the trapezoidal quadrature weight ``w_n * vol``, which makes ``eta`` the
L^2(Q)-Riesz representative of the state sensitivity.  In particular
``lambda[N] = eta[N] = 0`` and

    sum_Q lambda g_u + sum_Q eta g_v = sum_Q a_u U + sum_Q a_v V

for the tangent (U, V) driven by (g_u, g_v), where ``sum_Q`` is the quadrature
of :func:`quadrature_inner` and ``a_u, a_v`` are the tracking derivatives.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import Control, SolverOptions, Trajectory, _solve
from .grid import (Grid, TimeGrid, chemo_flux_divergence_du, chemo_flux_divergence_dv,
                   chemo_flux_divergence_T_u, chemo_flux_divergence_T_v)
from .objective import ObjectiveWeights, TargetData, tracking_derivatives


@dataclass
class TangentPair:
    U: np.ndarray
    V: np.ndarray


@dataclass
class AdjointPair:
    lam: np.ndarray
    eta: np.ndarray


def quadrature_inner(a, b, grid: Grid, timegrid: TimeGrid) -> float:
    """``<a, b>_Q``: trapezoid in time, midpoint in space."""
    w = timegrid.weights()
    axes = tuple(range(1, np.ndim(a)))
    return float(np.sum(w * np.sum(np.asarray(a) * np.asarray(b), axis=axes)) * timegrid.dt * grid.cell_volume)


# -- one-step maps -------------------------------------------------------------


def linearized_step(u_n, v_n, v_next, f_n, U_n, V_n, F_n, gu_n, gv_n, dt, grid, opts=SolverOptions()):
    """Derivative of one forward step along the base ``(u_n, v_n) -> (., v_next)``."""
    chi = grid.control_mask
    rhs_v = V_n + dt * U_n + dt * np.where(chi, f_n * V_n + F_n * v_n, 0.0) + dt * gv_n
    V_next = _solve(1.0 + dt, dt, rhs_v, grid, opts, None, None)
    rhs_u = (U_n + dt * chemo_flux_divergence_du(U_n, v_next, grid, opts.flux)
             + dt * chemo_flux_divergence_dv(u_n, V_next, v_next, grid, opts.flux) + dt * gu_n)
    U_next = _solve(1.0, dt, rhs_u, grid, opts, None, None)
    return U_next, V_next


def adjoint_step(u_n, v_n, v_next, f_n, P_next, Q_next, dt, grid, opts=SolverOptions()):
    """Transpose of :func:`linearized_step`.

    ``(P_next, Q_next)`` are covectors on ``(U_next, V_next)``; returns the
    covectors on ``(U_n, V_n)`` plus the raw multipliers ``(r_u, r_v)`` of the
    two implicit solves (the sensitivities w.r.t. ``dt * g`` and ``dt * F v``).
    """
    chi = grid.control_mask
    r_u = _solve(1.0, dt, P_next, grid, opts, None, None)
    Qhat = Q_next + dt * chemo_flux_divergence_T_v(r_u, u_n, v_next, grid, opts.flux)
    r_v = _solve(1.0 + dt, dt, Qhat, grid, opts, None, None)
    P_n = r_u + dt * chemo_flux_divergence_T_u(r_u, v_next, grid, opts.flux) + dt * r_v
    Q_n = r_v + dt * np.where(chi, f_n * r_v, 0.0)
    return P_n, Q_n, r_u, r_v


# -- trajectories --------------------------------------------------------------


def _seq(x, N, dims):
    if x is None:
        return np.zeros((N + 1,) + dims)
    x = x.values if isinstance(x, Control) else np.asarray(x, dtype=float)
    if x.shape != (N + 1,) + dims:
        raise ValueError(f"sequence shape {x.shape}, expected {(N + 1,) + dims}")
    return x


def solve_linearized(base: Trajectory, f: Control, F=None, U0=None, V0=None, g_u=None, g_v=None,
                     opts: SolverOptions = SolverOptions()) -> TangentPair:
    grid, tg = base.grid, base.timegrid
    N, dt = tg.steps, tg.dt
    F, g_u, g_v = (_seq(x, N, grid.dims) for x in (F, g_u, g_v))
    if F is not None:
        F = np.where(grid.control_mask, F, 0.0)
    U = np.zeros((N + 1,) + grid.dims)
    V = np.zeros_like(U)
    if U0 is not None:
        grid.check(U0)
        U[0] = U0
    if V0 is not None:
        grid.check(V0)
        V[0] = V0
    for n in range(N):
        U[n + 1], V[n + 1] = linearized_step(base.u[n], base.v[n], base.v[n + 1], f.values[n], U[n], V[n],
                                             F[n], g_u[n], g_v[n], dt, grid, opts)
    return TangentPair(U, V)


def adjoint_from_sources(base: Trajectory, f: Control, a_u, a_v, opts: SolverOptions = SolverOptions()) -> AdjointPair:
    """Backward sweep for the functional ``<a_u, U>_Q + <a_v, V>_Q``."""
    grid, tg = base.grid, base.timegrid
    N, dt = tg.steps, tg.dt
    c = tg.weights() * dt * grid.cell_volume
    lam = np.zeros((N + 1,) + grid.dims)
    eta = np.zeros_like(lam)
    P, Q = c[N] * a_u[N], c[N] * a_v[N]
    for n in range(N - 1, -1, -1):
        P_n, Q_n, r_u, r_v = adjoint_step(base.u[n], base.v[n], base.v[n + 1], f.values[n], P, Q, dt, grid, opts)
        lam[n] = r_u / (c[n] / dt)
        eta[n] = r_v / (c[n] / dt)
        P = c[n] * a_u[n] + P_n
        Q = c[n] * a_v[n] + Q_n
    return AdjointPair(lam, eta)


def solve_adjoint(base: Trajectory, f: Control, targets: TargetData, weights: ObjectiveWeights,
                  opts: SolverOptions = SolverOptions()) -> AdjointPair:
    a_u, a_v = tracking_derivatives(base, targets, weights)
    return adjoint_from_sources(base, f, a_u, a_v, opts)


def control_gradient(f: Control, base: Trajectory, adj: AdjointPair, weights: ObjectiveWeights) -> Control:
    """Riesz gradient ``(alpha_f f^3 + v eta) chi`` of the discrete objective."""
    g = weights.alpha_f * f.values ** 3 + base.v * adj.eta
    return f.copy(np.where(f.grid.control_mask, g, 0.0))
