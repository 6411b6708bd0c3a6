"""Verification routines shared by the CLI and the test-suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import adjoint_from_sources, quadrature_inner, solve_linearized, tracking_derivatives
from .diagnostics import entropy_energy, mass_drift, strong_residual
from .forward import Control, SolverOptions, simulate, simulate_regularized, step
from .grid import Grid, TimeGrid, chemo_flux_divergence, integrate, laplacian_neumann, spacetime_lp_norm
from .objective import TargetData, evaluate_objective
from .optimizer import reduced_gradient


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.value:.3e} (threshold {self.threshold:.1e}){' ' + self.note if self.note else ''}"


def random_direction(grid: Grid, timegrid: TimeGrid, rng) -> Control:
    return Control(rng.standard_normal((timegrid.steps + 1,) + grid.dims), grid, timegrid)


def gradient_check(u0, v0, f: Control, targets: TargetData, weights, grid, timegrid, sigmas, rng,
                   solver=SolverOptions()):
    """Adjoint directional derivative vs central differences of the discrete objective.

    Returns rows ``(sigma, adjoint, finite_difference, relative_error)``.
    """
    _, g, _, _ = reduced_gradient(u0, v0, f, targets, weights, grid, timegrid, solver)
    F = random_direction(grid, timegrid, rng)
    adjoint = quadrature_inner(g.values, F.values, grid, timegrid)

    def J(values):
        c = f.copy(values)
        return evaluate_objective(simulate(u0, v0, c, timegrid, grid, solver), c, targets, weights)

    rows = []
    for s in sigmas:
        fd = (J(f.values + s * F.values) - J(f.values - s * F.values)) / (2 * s)
        rows.append((s, adjoint, fd, abs(adjoint - fd) / max(abs(adjoint), 1e-300)))
    return rows


def duality_gap(base, f, targets, weights, rng, solver=SolverOptions()) -> float:
    """Relative mismatch of the tangent/adjoint pairing for random sources."""
    grid, tg = base.grid, base.timegrid
    g_u = rng.standard_normal(base.u.shape)
    g_v = rng.standard_normal(base.u.shape)
    tangent = solve_linearized(base, f, g_u=g_u, g_v=g_v, opts=solver)
    a_u, a_v = tracking_derivatives(base, targets, weights)
    adj = adjoint_from_sources(base, f, a_u, a_v, solver)
    lhs = quadrature_inner(adj.lam, g_u, grid, tg) + quadrature_inner(adj.eta, g_v, grid, tg)
    rhs = quadrature_inner(a_u, tangent.U, grid, tg) + quadrature_inner(a_v, tangent.V, grid, tg)
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


def v_average_gap(traj, f: Control, solver=SolverOptions()) -> tuple[float, float]:
    """Largest mismatch in the discrete identity for the mean of v, with its allowed bound.

    ``(int v[n+1] - int v[n]) / dt + int v[n+1] = int u[n] + int chi f[n] v[n]``
    holds up to the Helmholtz residual; the bound is ``10 tol ||rhs||_{L^2} sqrt|Omega| / dt``.
    """
    grid, dt = traj.grid, traj.timegrid.dt
    chi = grid.control_mask
    worst, bound = 0.0, 0.0
    for n in range(traj.timegrid.steps):
        lhs = (integrate(traj.v[n + 1], grid) - integrate(traj.v[n], grid)) / dt + integrate(traj.v[n + 1], grid)
        rhs = integrate(traj.u[n], grid) + integrate(np.where(chi, f.values[n] * traj.v[n], 0.0), grid)
        data = traj.v[n] + dt * traj.u[n] + dt * np.where(chi, f.values[n] * traj.v[n], 0.0)
        worst = max(worst, abs(lhs - rhs))
        bound = max(bound, 10 * solver.tol * np.sqrt(np.sum(data ** 2) * grid.cell_volume * grid.volume) / dt)
    return worst, bound + 1e-13


def eps_sweep(u0, v0, f, grid, timegrid, eps_list, solver=SolverOptions()):
    """Rows ``(eps, ||u_eps - u_0||_{L2(Q)}, ||z_eps - v_eps||_{L2(Q)})`` plus the log-log slope."""
    ref = simulate(u0, v0, f, timegrid, grid, solver)
    rows = []
    for eps in eps_list:
        reg = simulate_regularized(u0, v0, f, timegrid, eps, grid, solver)
        du = spacetime_lp_norm(reg.u - ref.u, grid, timegrid, 2)
        dz = spacetime_lp_norm(reg.z - reg.v, grid, timegrid, 2)
        rows.append((eps, du, dz))
    e = np.log([r[0] for r in rows])
    slope = float(np.polyfit(e, np.log([r[2] for r in rows]), 1)[0]) if len(rows) > 1 else float("nan")
    return rows, slope


def verify_suite(u0, v0, f: Control, targets: TargetData, weights, grid: Grid, timegrid: TimeGrid, eps: float,
                 rng, solver=SolverOptions(), sigmas=(1e-3, 1e-4)):
    """Structural invariant checks on one configuration; returns ``[CheckResult]``."""
    out = []
    traj = simulate(u0, v0, f, timegrid, grid, solver)
    out.append(CheckResult("mass conservation", (d := mass_drift(traj)) <= 1e-9, d, 1e-9))
    ru, rv = strong_residual(traj, f, solver)
    out.append(CheckResult("strong residual u", ru <= 10 * solver.tol, ru, 10 * solver.tol))
    out.append(CheckResult("strong residual v", rv <= 10 * solver.tol, rv, 10 * solver.tol))
    gap, bound = v_average_gap(traj, f, solver)
    out.append(CheckResult("mean-of-v identity", gap <= bound, gap, bound))

    c = float(np.mean(u0))
    one = grid.full(c)
    u1, v1 = step(one, one, grid.zeros(), timegrid.dt, grid, solver)
    dev = float(max(np.max(np.abs(u1 - c)), np.max(np.abs(v1 - c))))
    out.append(CheckResult("steady state", dev <= 1e-12 * max(1.0, c), dev, 1e-12 * max(1.0, c)))

    a, b = rng.standard_normal(grid.dims), rng.standard_normal(grid.dims)
    vol = grid.cell_volume
    la, lb = laplacian_neumann(a, grid), laplacian_neumann(b, grid)
    sym = abs(np.sum(la * b) - np.sum(a * lb)) * vol / (np.linalg.norm(la) * np.linalg.norm(b) * vol)
    out.append(CheckResult("laplacian symmetry", sym <= 1e-12, sym, 1e-12))
    flux = abs(integrate(chemo_flux_divergence(np.abs(a), b, grid, solver.flux), grid))
    scale = np.linalg.norm(a) * np.linalg.norm(b)
    out.append(CheckResult("chemotaxis flux conservation", flux <= 1e-12 * scale, flux / scale, 1e-12))

    gap = duality_gap(traj, f, targets, weights, rng, solver)
    out.append(CheckResult("adjoint duality", gap <= 1e-9, gap, 1e-9))
    rows = gradient_check(u0, v0, f, targets, weights, grid, timegrid, sigmas, rng, solver)
    best = min(r[3] for r in rows)
    out.append(CheckResult("gradient vs finite differences", best <= 1e-4, best, 1e-4))

    if eps > 0:
        reg = simulate_regularized(u0, v0, f, timegrid, eps, grid, solver)
        d = mass_drift(reg)
        out.append(CheckResult("mass conservation (regularized)", d <= 1e-9, d, 1e-9))

    # monitored, never failing
    out.append(CheckResult("min u (monitor)", True, float(np.min(traj.min_u)), 0.0, "not asserted"))
    if np.all(f.values == 0):
        E, _ = entropy_energy(traj)
        rise = float(max(np.max(np.diff(E)), 0.0))
        out.append(CheckResult("energy increase (monitor)", True, rise, 0.0, "not asserted"))
    return out
