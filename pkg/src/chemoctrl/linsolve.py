"""Matrix-free solver for ``(a I - b L) x = rhs`` with the Neumann Laplacian ``L``.

The Krylov iteration is the conjugate residual method: for a symmetric positive
(semi)definite operator it converges at the CG rate while keeping the residual
norm non-increasing.  The kernel is compiled with numba and works on a 3-D view
of the field; missing axes get a zero inverse-spacing and drop out.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numba
import numpy as np

from .grid import Grid, integrate


class SolverError(RuntimeError):
    """Helmholtz solve failed (non-convergence or inconsistent data)."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass
class HelmholtzProblem:
    a: float
    b: float
    rhs: np.ndarray
    tol: float = 1e-10
    max_iter: int | None = None
    diag_scaling: bool = False


@dataclass
class SolveInfo:
    iterations: int
    residual: float  # relative, ||A x - rhs|| / ||rhs||
    history: np.ndarray


@numba.njit(cache=True)
def _apply(x, out, a, b, ihx, ihy, ihz):
    nx, ny, nz = x.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                c = x[i, j, k]
                lap = 0.0
                if i > 0:
                    lap += (x[i - 1, j, k] - c) * ihx
                if i < nx - 1:
                    lap += (x[i + 1, j, k] - c) * ihx
                if j > 0:
                    lap += (x[i, j - 1, k] - c) * ihy
                if j < ny - 1:
                    lap += (x[i, j + 1, k] - c) * ihy
                if k > 0:
                    lap += (x[i, j, k - 1] - c) * ihz
                if k < nz - 1:
                    lap += (x[i, j, k + 1] - c) * ihz
                out[i, j, k] = a * c - b * lap


@numba.njit(cache=True)
def _dot(x, y):
    xf = x.ravel()
    yf = y.ravel()
    s = 0.0
    for i in range(xf.size):
        s += xf[i] * yf[i]
    return s


@numba.njit(cache=True)
def _axpy(alpha, x, y):
    """y += alpha x"""
    xf = x.ravel()
    yf = y.ravel()
    for i in range(xf.size):
        yf[i] += alpha * xf[i]


@numba.njit(cache=True)
def _xpby(x, beta, y):
    """y = x + beta y"""
    xf = x.ravel()
    yf = y.ravel()
    for i in range(xf.size):
        yf[i] = xf[i] + beta * yf[i]


@numba.njit(cache=True)
def _true_residual(rhs, x, r, a, b, ihx, ihy, ihz):
    _apply(x, r, a, b, ihx, ihy, ihz)
    rf = r.ravel()
    bf = rhs.ravel()
    for i in range(rf.size):
        rf[i] = bf[i] - rf[i]


@numba.njit(cache=True)
def _conjugate_residual(rhs, x, a, b, ihx, ihy, ihz, tol, max_iter, history):
    """Returns (iterations, relative residual, number of history entries)."""
    bnorm = math.sqrt(_dot(rhs, rhs))
    if bnorm == 0.0:
        x[:] = 0.0
        history[0] = 0.0
        return 0, 0.0, 1
    r = np.empty_like(rhs)
    Ar = np.empty_like(rhs)
    p = np.empty_like(rhs)
    Ap = np.empty_like(rhs)
    it = 0
    nh = 0
    rel = 0.0
    # outer loop restarts from the true residual to stop recurrence drift
    while True:
        _true_residual(rhs, x, r, a, b, ihx, ihy, ihz)
        rel = math.sqrt(_dot(r, r)) / bnorm
        if nh < history.size:
            history[nh] = rel
            nh += 1
        if rel <= tol or it >= max_iter:
            return it, rel, nh
        _apply(r, Ar, a, b, ihx, ihy, ihz)
        p[:] = r
        Ap[:] = Ar
        rAr = _dot(r, Ar)
        while it < max_iter:
            ApAp = _dot(Ap, Ap)
            if ApAp == 0.0 or rAr == 0.0:
                break
            alpha = rAr / ApAp
            _axpy(alpha, p, x)
            _axpy(-alpha, Ap, r)
            it += 1
            rel = math.sqrt(_dot(r, r)) / bnorm
            if rel <= 0.5 * tol:
                break
            if nh < history.size:
                history[nh] = rel
                nh += 1
            _apply(r, Ar, a, b, ihx, ihy, ihz)
            rAr_new = _dot(r, Ar)
            beta = rAr_new / rAr
            rAr = rAr_new
            _xpby(r, beta, p)
            _xpby(Ar, beta, Ap)
        if it >= max_iter:
            _true_residual(rhs, x, r, a, b, ihx, ihy, ihz)
            rel = math.sqrt(_dot(r, r)) / bnorm
            return it, rel, nh


def _as3d(f: np.ndarray) -> np.ndarray:
    # missing axes go in front so the longest run of cells is the innermost loop
    return np.ascontiguousarray(f, dtype=np.float64).reshape((1,) * (3 - f.ndim) + f.shape)


def _inv_h2(grid: Grid) -> tuple[float, float, float]:
    ih = [1.0 / h**2 for h in grid.spacing]
    return tuple([0.0] * (3 - len(ih)) + ih)


def default_max_iter(grid: Grid) -> int:
    return int(10 * math.ceil(grid.size ** (1.0 / grid.ndim)))


def apply_helmholtz(x: np.ndarray, a: float, b: float, grid: Grid) -> np.ndarray:
    """``(a I - b L) x`` via the compiled stencil."""
    grid.check(x)
    out = np.empty(grid.dims)
    _apply(_as3d(x), out.reshape(_as3d(x).shape), float(a), float(b), *_inv_h2(grid))
    return out


def helmholtz_solve(problem: HelmholtzProblem, grid: Grid, x0: np.ndarray | None = None,
                    return_info: bool = False):
    """Solve ``(a I - b L) x = rhs`` to relative residual ``tol``.

    ``x0`` is an optional initial guess.  With ``a == 0`` the right-hand side
    must have zero integral and the mean-zero solution is returned.
    """
    a, b, rhs = float(problem.a), float(problem.b), problem.rhs
    grid.check(rhs)
    if a < 0 or b < 0 or (a == 0 and b == 0):
        raise ValueError("need a >= 0, b >= 0 and a + b > 0")
    if not np.all(np.isfinite(rhs)):
        raise SolverError("non-finite right-hand side")
    if a == 0:
        mean = integrate(rhs, grid) / grid.volume
        scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
        if abs(mean) > 1e-12 * max(scale, 1e-300):
            raise SolverError("a = 0 requires a right-hand side with zero integral")
    max_iter = problem.max_iter or default_max_iter(grid)
    rhs3 = _as3d(rhs)
    ihx, ihy, ihz = _inv_h2(grid)
    if problem.diag_scaling:
        d = a + 2.0 * b * (ihx * (rhs3.shape[0] > 1) + ihy * (rhs3.shape[1] > 1) + ihz * (rhs3.shape[2] > 1))
        a, b, rhs3 = a / d, b / d, rhs3 / d
    x = np.zeros_like(rhs3) if x0 is None else _as3d(x0).copy()
    history = np.empty(max_iter + 2)
    it, rel, nh = _conjugate_residual(rhs3, x, a, b, ihx, ihy, ihz, float(problem.tol), int(max_iter), history)
    if not np.all(np.isfinite(x)):
        raise SolverError("solver produced non-finite values", rel, it)
    if rel > problem.tol:
        raise SolverError(f"Helmholtz solve did not converge in {it} iterations "
                          f"(relative residual {rel:.3e} > tol {problem.tol:.1e})", rel, it)
    x = x.reshape(grid.dims)
    if a == 0:
        x = x - integrate(x, grid) / grid.volume
    if return_info:
        return x, SolveInfo(it, rel, history[:nh].copy())
    return x


def smoother_apply(z: np.ndarray, eps: float, grid: Grid, tol: float = 1e-10, max_iter: int | None = None,
                   x0: np.ndarray | None = None) -> np.ndarray:
    """Elliptic smoother: the ``v`` with ``v - eps L v = z`` (identity for eps = 0)."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if eps == 0:
        return np.array(z, dtype=float, copy=True)
    return helmholtz_solve(HelmholtzProblem(1.0, eps, z, tol, max_iter), grid, x0=x0)
