"""Tracking objective, its pointwise derivatives and the admissible box."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

REGULARITY_EXPONENT = 20.0 / 7.0


@dataclass(frozen=True)
class ObjectiveWeights:
    alpha_u: float = 1.0
    alpha_v: float = 0.0
    alpha_f: float = 0.0
    # exponent of the u-tracking term; 20/7 matches the regularity criterion, 2 gives plain L^2
    exponent: float = REGULARITY_EXPONENT

    def __post_init__(self):
        if not self.alpha_u > 0:
            raise ValueError("alpha_u must be positive")
        if self.alpha_v < 0:
            raise ValueError("alpha_v must be nonnegative")
        if self.alpha_f < 0:
            raise ValueError("alpha_f must be nonnegative")
        if not self.exponent > 1:
            raise ValueError("tracking exponent must be > 1")


@dataclass(frozen=True)
class AdmissibleBox:
    f_min: float = -math.inf
    f_max: float = math.inf

    def __post_init__(self):
        if math.isnan(self.f_min) or math.isnan(self.f_max) or self.f_min > self.f_max:
            raise ValueError("admissible box must satisfy f_min <= f_max")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.f_min) and math.isfinite(self.f_max)

    def validate(self, weights: ObjectiveWeights) -> None:
        if weights.alpha_f == 0 and not self.bounded:
            raise ValueError("alpha_f = 0 requires a bounded admissible box")


@dataclass
class TargetData:
    u_d: np.ndarray  # (steps + 1, *dims)
    v_d: np.ndarray

    def __post_init__(self):
        self.u_d = np.asarray(self.u_d, dtype=float)
        self.v_d = np.asarray(self.v_d, dtype=float)
        if self.u_d.shape != self.v_d.shape:
            raise ValueError("u_d and v_d must have the same shape")


def _tracking_power(d, p):
    return np.abs(d) ** p


def tracking_derivatives(traj, targets: TargetData, w: ObjectiveWeights):
    """Pointwise ``(alpha_u sgn(d)|d|^(p-1), alpha_v (v - v_d))`` with ``d = u - u_d``."""
    if targets.u_d.shape != traj.u.shape:
        raise ValueError("targets do not match the trajectory")
    d = traj.u - targets.u_d
    a_u = w.alpha_u * np.sign(d) * np.abs(d) ** (w.exponent - 1.0)
    a_v = w.alpha_v * (traj.v - targets.v_d)
    return a_u, a_v


def evaluate_objective(traj, f, targets: TargetData, w: ObjectiveWeights) -> float:
    """Discrete objective, trapezoid in time and midpoint in space for all terms.

    ``(alpha_u/p) |u-u_d|^p + (alpha_v/2) |v-v_d|^2 + (alpha_f/4) |f|^4`` with
    ``p = 20/7`` by default (so the first factor is ``7 alpha_u / 20``).
    """
    grid, tg = traj.grid, traj.timegrid
    if targets.u_d.shape != traj.u.shape:
        raise ValueError("targets do not match the trajectory")
    axes = tuple(range(1, traj.u.ndim))
    fv = np.where(grid.control_mask, f.values, 0.0)
    density = (w.alpha_u / w.exponent) * np.sum(_tracking_power(traj.u - targets.u_d, w.exponent), axis=axes)
    if w.alpha_v:
        density = density + 0.5 * w.alpha_v * np.sum((traj.v - targets.v_d) ** 2, axis=axes)
    if w.alpha_f:
        density = density + 0.25 * w.alpha_f * np.sum(fv ** 4, axis=axes)
    return float(np.sum(tg.weights() * density) * tg.dt * grid.cell_volume)


def project(f, box: AdmissibleBox):
    """Pointwise clamp onto the box, zero outside the control region."""
    vals = np.clip(f.values, box.f_min, box.f_max)
    return f.copy(np.where(f.grid.control_mask, vals, 0.0))
