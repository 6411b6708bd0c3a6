"""Structural diagnostics along trajectories.

None of these functions assert anything; they measure.  The acceptance suite
decides what counts as a violation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import Control, SolverOptions, Trajectory
from .grid import chemo_flux_divergence, gradient_norm_sq, laplacian_neumann, spacetime_lp_norm
from .linsolve import apply_helmholtz
from .objective import REGULARITY_EXPONENT


@dataclass
class DiagnosticsReport:
    times: np.ndarray
    mass_series: np.ndarray
    energy_series: np.ndarray
    dissipation_series: np.ndarray
    regularity_norm: float
    min_u: np.ndarray
    min_v: np.ndarray
    residual_u: float
    residual_v: float
    mass_drift: float

    def rows(self):
        m0 = self.mass_series[0]
        for n, t in enumerate(self.times):
            drift = abs(self.mass_series[n] - m0) / m0 if m0 else float("nan")
            yield (n, t, self.mass_series[n], drift, self.energy_series[n], self.dissipation_series[n],
                   self.min_u[n], self.min_v[n])

    def summary(self) -> dict:
        return {
            "mass_drift": self.mass_drift,
            "regularity_norm": self.regularity_norm,
            "residual_u": self.residual_u,
            "residual_v": self.residual_v,
            "min_u": float(np.min(self.min_u)),
            "min_v": float(np.min(self.min_v)),
            "energy_monotone": bool(np.all(np.diff(self.energy_series) <= 0)),
        }


def mass_drift(traj) -> float:
    vol = traj.grid.cell_volume
    m = np.array([np.sum(u) for u in traj.u]) * vol
    if m[0] == 0:
        raise ValueError("initial mass is zero")
    return float(np.max(np.abs(m - m[0])) / abs(m[0]))


def entropy_energy(traj, eps: float = 0.0):
    """Entropy-energy ``E_n`` and dissipation ``D_n`` per level.

    E = sum (u+1) ln(u+1) + 1/2 ||grad v||^2 + eps/2 ||L v||^2
    D = 4 ||grad sqrt(u+1)||^2 + ||L v||^2
    """
    grid = traj.grid
    if np.any(traj.u <= -1):
        raise ValueError("entropy undefined: u <= -1 somewhere")
    vol = grid.cell_volume
    E = np.empty(len(traj.u))
    D = np.empty(len(traj.u))
    for n, (u, v) in enumerate(zip(traj.u, traj.v)):
        lap_v = laplacian_neumann(v, grid)
        lap_sq = float(np.sum(lap_v ** 2) * vol)
        E[n] = float(np.sum((u + 1) * np.log1p(u)) * vol) + 0.5 * gradient_norm_sq(v, grid) + 0.5 * eps * lap_sq
        D[n] = 4.0 * gradient_norm_sq(np.sqrt(u + 1), grid) + lap_sq
    return E, D


def regularity_norm(traj) -> float:
    """``||u||_{L^{20/7}(Q)}``."""
    return spacetime_lp_norm(traj.u, traj.grid, traj.timegrid, REGULARITY_EXPONENT)


def strong_residual(traj, f: Control, opts: SolverOptions = SolverOptions()):
    """Relative residuals of both discrete equations, maximized over the steps.

    For step ``n -> n+1`` the u-residual is
    ``||(I - dt L) u[n+1] - u[n] - dt C(u[n], v[n+1])|| / ||u[n] + dt C(...)||``,
    i.e. ``dt`` times the pointwise PDE residual relative to the step's data;
    the v-residual is analogous.  A trajectory produced by ``simulate`` has both
    at most the Helmholtz tolerance.
    """
    grid, dt = traj.grid, traj.timegrid.dt
    chi = grid.control_mask
    fv = f.values if isinstance(f, Control) else np.asarray(f)
    res_u = res_v = 0.0
    for n in range(traj.timegrid.steps):
        u_n, v_n, u1, v1 = traj.u[n], traj.v[n], traj.u[n + 1], traj.v[n + 1]
        rhs_v = v_n + dt * u_n + dt * np.where(chi, fv[n] * v_n, 0.0)
        rhs_u = u_n + dt * chemo_flux_divergence(u_n, v1, grid, opts.flux)
        rv = apply_helmholtz(v1, 1.0 + dt, dt, grid) - rhs_v
        ru = apply_helmholtz(u1, 1.0, dt, grid) - rhs_u
        res_v = max(res_v, float(np.linalg.norm(rv) / max(np.linalg.norm(rhs_v), 1e-300)))
        res_u = max(res_u, float(np.linalg.norm(ru) / max(np.linalg.norm(rhs_u), 1e-300)))
    return res_u, res_v


def positivity_margin(traj) -> tuple[float, float]:
    return float(np.min(traj.min_u)), float(np.min(traj.min_v))


def diagnose(traj: Trajectory, f: Control, eps: float = 0.0, opts: SolverOptions = SolverOptions()) -> DiagnosticsReport:
    E, D = entropy_energy(traj, eps)
    ru, rv = strong_residual(traj, f, opts)
    return DiagnosticsReport(
        times=traj.timegrid.times,
        mass_series=traj.mass,
        energy_series=E,
        dissipation_series=D,
        regularity_norm=regularity_norm(traj),
        min_u=traj.min_u,
        min_v=traj.min_v,
        residual_u=ru,
        residual_v=rv,
        mass_drift=mass_drift(traj),
    )
