"""Cell-centred rectangular grids, Neumann stencils and quadrature.

Fields are plain ``numpy`` arrays whose shape equals ``Grid.dims`` (row-major).
All difference operators use a zero-flux closure on the boundary faces, so
every divergence-form operator telescopes to zero when integrated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np


class GridMismatchError(ValueError):
    """Raised when fields living on different grids are combined."""


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred mesh on ``[0, extents[0]] x ...`` (1 to 3 axes).

    ``control_mask`` marks the cells of the control region; it defaults to the
    whole domain.
    """

    dims: tuple[int, ...]
    extents: tuple[float, ...]
    control_mask: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(n) for n in np.atleast_1d(self.dims))
        extents = tuple(float(L) for L in np.atleast_1d(self.extents))
        if not 1 <= len(dims) <= 3:
            raise ValueError("grid must have 1, 2 or 3 axes")
        if len(extents) != len(dims):
            raise ValueError("dims and extents must have the same length")
        if any(n < 1 for n in dims):
            raise ValueError("dims must be positive")
        if any(not (L > 0 and math.isfinite(L)) for L in extents):
            raise ValueError("extents must be positive and finite")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "extents", extents)
        mask = self.control_mask
        if mask is None:
            mask = np.ones(dims, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != dims:
            raise ValueError(f"control_mask shape {mask.shape} != dims {dims}")
        mask = mask.copy()
        mask.flags.writeable = False
        object.__setattr__(self, "control_mask", mask)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extents, self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def centers(self) -> list[np.ndarray]:
        """Cell-centre coordinates per axis, ``(i + 1/2) h``."""
        return [(np.arange(n) + 0.5) * h for n, h in zip(self.dims, self.spacing)]

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.centers(), indexing="ij"))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.dims)

    def full(self, value: float) -> np.ndarray:
        return np.full(self.dims, float(value))

    def with_control_box(self, lo, hi) -> "Grid":
        """Copy of the grid whose control region is the axis-aligned box [lo, hi]."""
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (self.ndim,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (self.ndim,))
        mask = np.ones(self.dims, dtype=bool)
        for a, x in enumerate(self.mesh()):
            mask &= (x >= lo[a]) & (x <= hi[a])
        return Grid(self.dims, self.extents, mask)

    def check(self, *fields: np.ndarray) -> None:
        for f in fields:
            if np.shape(f) != self.dims:
                raise GridMismatchError(f"field shape {np.shape(f)} does not match grid {self.dims}")


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError("horizon must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def weights(self) -> np.ndarray:
        """Trapezoidal weights ``w_n`` (1/2 at both ends, 1 inside)."""
        w = np.ones(self.steps + 1)
        w[0] = w[-1] = 0.5
        return w


# -- face operators ---------------------------------------------------------
#
# For axis ``a`` the interior faces form an array with ``dims[a] - 1`` entries
# along that axis.  ``face_gradient`` maps cells -> faces and ``face_divergence``
# maps faces -> cells with zero flux through the boundary faces; the two are
# negative transposes of each other in the plain Euclidean inner product.


def face_gradient(f: np.ndarray, grid: Grid) -> list[np.ndarray]:
    return [np.diff(f, axis=a) / h for a, h in enumerate(grid.spacing)]


def face_divergence(fluxes: list[np.ndarray], grid: Grid) -> np.ndarray:
    out = np.zeros(grid.dims)
    for a, (F, h) in enumerate(zip(fluxes, grid.spacing)):
        pad = [(0, 0)] * grid.ndim
        pad[a] = (1, 1)
        out += np.diff(np.pad(F, pad), axis=a) / h
    return out


def face_average(f: np.ndarray, axis: int) -> np.ndarray:
    lo = np.take(f, np.arange(f.shape[axis] - 1), axis=axis)
    hi = np.take(f, np.arange(1, f.shape[axis]), axis=axis)
    return 0.5 * (lo + hi)


def face_average_T(phi: np.ndarray, axis: int) -> np.ndarray:
    """Transpose of :func:`face_average` (faces -> cells)."""
    pad = [(0, 0)] * phi.ndim
    pad[axis] = (1, 1)
    p = np.pad(phi, pad)
    n = p.shape[axis]
    return 0.5 * (np.take(p, np.arange(n - 1), axis=axis) + np.take(p, np.arange(1, n), axis=axis))


def face_upwind(f: np.ndarray, axis: int, grad_v: np.ndarray) -> np.ndarray:
    """Upwind face value of ``f`` for the repulsive drift velocity ``-grad v``.

    Velocity pointing in the + direction (``grad_v < 0``) takes the left cell.
    """
    lo = np.take(f, np.arange(f.shape[axis] - 1), axis=axis)
    hi = np.take(f, np.arange(1, f.shape[axis]), axis=axis)
    return np.where(grad_v < 0, lo, hi)


def face_upwind_T(phi: np.ndarray, axis: int, grad_v: np.ndarray) -> np.ndarray:
    left = np.where(grad_v < 0, phi, 0.0)
    right = phi - left
    pad_lo = [(0, 0)] * phi.ndim
    pad_hi = [(0, 0)] * phi.ndim
    pad_lo[axis] = (0, 1)
    pad_hi[axis] = (1, 0)
    return np.pad(left, pad_lo) + np.pad(right, pad_hi)


# -- operators ---------------------------------------------------------------


def laplacian_neumann(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Conservative 3/5/7-point Laplacian with homogeneous Neumann closure."""
    grid.check(f)
    return face_divergence(face_gradient(f, grid), grid)


def chemo_flux_divergence(u: np.ndarray, v: np.ndarray, grid: Grid, flux: str = "central") -> np.ndarray:
    """Discrete ``div(u grad v)`` in face-flux form.

    ``flux="central"`` uses the arithmetic face average of ``u``;
    ``flux="upwind"`` picks the upwind cell for the drift ``-grad v``.
    """
    grid.check(u, v)
    gv = face_gradient(v, grid)
    if flux == "central":
        fluxes = [face_average(u, a) * g for a, g in enumerate(gv)]
    elif flux == "upwind":
        fluxes = [face_upwind(u, a, g) * g for a, g in enumerate(gv)]
    else:
        raise ValueError(f"unknown flux scheme {flux!r}")
    return face_divergence(fluxes, grid)


def chemo_flux_divergence_T_u(r: np.ndarray, v: np.ndarray, grid: Grid, flux: str = "central") -> np.ndarray:
    """Transpose of ``U -> chemo_flux_divergence(U, v)`` applied to ``r``."""
    gv = face_gradient(v, grid)
    gr = face_gradient(r, grid)
    out = np.zeros(grid.dims)
    for a, (g, q) in enumerate(zip(gv, gr)):
        phi = -g * q
        out += face_average_T(phi, a) if flux == "central" else face_upwind_T(phi, a, g)
    return out


def chemo_flux_divergence_T_v(r: np.ndarray, u: np.ndarray, v: np.ndarray, grid: Grid,
                              flux: str = "central") -> np.ndarray:
    """Transpose of ``V -> chemo_flux_divergence(u, V)`` (upwind side frozen at ``v``)."""
    gr = face_gradient(r, grid)
    if flux == "central":
        fluxes = [face_average(u, a) * q for a, q in enumerate(gr)]
    else:
        gv = face_gradient(v, grid)
        fluxes = [face_upwind(u, a, g) * q for a, (g, q) in enumerate(zip(gv, gr))]
    return face_divergence(fluxes, grid)


def chemo_flux_divergence_dv(u: np.ndarray, V: np.ndarray, v: np.ndarray, grid: Grid,
                             flux: str = "central") -> np.ndarray:
    """Derivative of ``chemo_flux_divergence(u, .)`` at ``v`` in direction ``V``."""
    gV = face_gradient(V, grid)
    if flux == "central":
        fluxes = [face_average(u, a) * q for a, q in enumerate(gV)]
    else:
        gv = face_gradient(v, grid)
        fluxes = [face_upwind(u, a, g) * q for a, (g, q) in enumerate(zip(gv, gV))]
    return face_divergence(fluxes, grid)


def chemo_flux_divergence_du(U: np.ndarray, v: np.ndarray, grid: Grid, flux: str = "central") -> np.ndarray:
    """Derivative of ``chemo_flux_divergence(., v)`` in direction ``U`` (it is linear in u)."""
    return chemo_flux_divergence(U, v, grid, flux)


# -- quadrature ----------------------------------------------------------------


def integrate(f: np.ndarray, grid: Grid) -> float:
    """Midpoint rule ``sum f * vol`` (pairwise summation)."""
    return float(np.sum(f) * grid.cell_volume)


def lp_norm(f: np.ndarray, grid: Grid, p: float = 2.0) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    if math.isinf(p):
        return float(np.max(np.abs(f))) if np.size(f) else 0.0
    return float((np.sum(np.abs(f) ** p) * grid.cell_volume) ** (1.0 / p))


def gradient_norm_sq(f: np.ndarray, grid: Grid) -> float:
    """``||grad f||^2`` from interior face differences (face volume = cell volume)."""
    return float(sum(np.sum(g * g) for g in face_gradient(f, grid)) * grid.cell_volume)


def spacetime_lp_norm(series, grid: Grid, timegrid: TimeGrid, p: float = 2.0) -> float:
    """``L^p(Q)`` norm: trapezoid in time, midpoint in space."""
    series = list(series)
    if len(series) != timegrid.steps + 1:
        raise ValueError(f"series has {len(series)} levels, expected {timegrid.steps + 1}")
    if p < 1:
        raise ValueError("p must be >= 1")
    w = timegrid.weights()
    level = np.array([np.sum(np.abs(f) ** p) for f in series])
    return float((np.sum(w * level) * timegrid.dt * grid.cell_volume) ** (1.0 / p))
