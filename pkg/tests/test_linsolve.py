import numpy as np
import pytest

from chemoctrl.grid import Grid, integrate, laplacian_neumann
from chemoctrl.linsolve import HelmholtzProblem, SolverError, apply_helmholtz, helmholtz_solve, smoother_apply


@pytest.fixture(params=[(40,), (12, 9), (5, 4, 6)])
def grid(request):
    return Grid(request.param, (1.0, 0.8, 1.2)[: len(request.param)])


def residual(x, a, b, rhs, grid):
    return np.linalg.norm(a * x - b * laplacian_neumann(x, grid) - rhs) / np.linalg.norm(rhs)


def test_pure_reaction(grid):
    x = helmholtz_solve(HelmholtzProblem(2.0, 0.0, grid.full(6.0)), grid)
    np.testing.assert_allclose(x, 3.0, rtol=1e-14)


@pytest.mark.parametrize("a,b", [(1.0, 0.3), (4.0, 10.0), (0.5, 1e-4)])
def test_constant_rhs(grid, a, b):
    x = helmholtz_solve(HelmholtzProblem(a, b, grid.full(2.0)), grid)
    np.testing.assert_allclose(x, 2.0 / a, rtol=1e-12)


def test_random_rhs_residual(grid, rng):
    rhs = rng.standard_normal(grid.dims)
    x = helmholtz_solve(HelmholtzProblem(1.0, 1e-2, rhs), grid)
    assert residual(x, 1.0, 1e-2, rhs, grid) <= 1e-10


def test_apply_matches_numpy_stencil(grid, rng):
    x = rng.standard_normal(grid.dims)
    np.testing.assert_allclose(apply_helmholtz(x, 1.5, 0.2, grid), 1.5 * x - 0.2 * laplacian_neumann(x, grid),
                               rtol=1e-13, atol=1e-13)


def test_mean_preserved(grid, rng):
    rhs = rng.random(grid.dims)
    x = helmholtz_solve(HelmholtzProblem(2.5, 0.1, rhs, tol=1e-12), grid)
    assert integrate(x, grid) == pytest.approx(integrate(rhs, grid) / 2.5, rel=1e-10)


def test_residual_history_monotone(rng):
    g = Grid((200,), (1.0,))
    rhs = rng.standard_normal(g.dims)
    _, info = helmholtz_solve(HelmholtzProblem(1.0, 0.01, rhs, tol=1e-12), g, return_info=True)
    assert info.iterations > 10
    assert np.all(np.diff(info.history) <= 1e-14)


def test_self_adjoint(grid, rng):
    r1, r2 = rng.standard_normal(grid.dims), rng.standard_normal(grid.dims)
    tol = 1e-10
    s1 = helmholtz_solve(HelmholtzProblem(1.0, 0.05, r1, tol), grid)
    s2 = helmholtz_solve(HelmholtzProblem(1.0, 0.05, r2, tol), grid)
    scale = np.linalg.norm(r1) * np.linalg.norm(r2)
    assert abs(np.sum(s1 * r2) - np.sum(r1 * s2)) <= 10 * tol * scale


def test_singular_operator(rng):
    g = Grid((30,), (1.0,))
    rhs = rng.standard_normal(g.dims)
    rhs -= rhs.mean()
    x = helmholtz_solve(HelmholtzProblem(0.0, 1.0, rhs, tol=1e-11), g)
    assert residual(x, 0.0, 1.0, rhs, g) <= 1e-11
    assert abs(integrate(x, g)) <= 1e-12
    with pytest.raises(SolverError):
        helmholtz_solve(HelmholtzProblem(0.0, 1.0, rhs + 1.0), g)


def test_non_convergence_reports_residual(rng):
    g = Grid((100,), (1.0,))
    with pytest.raises(SolverError) as info:
        helmholtz_solve(HelmholtzProblem(1.0, 1.0, rng.standard_normal(g.dims), max_iter=3), g)
    assert info.value.residual > 1e-10
    assert info.value.iterations == 3


def test_invalid_coefficients():
    g = Grid((4,), (1.0,))
    with pytest.raises(ValueError):
        helmholtz_solve(HelmholtzProblem(0.0, 0.0, g.full(1.0)), g)


def test_diag_scaling_same_solution(grid, rng):
    rhs = rng.standard_normal(grid.dims)
    a = helmholtz_solve(HelmholtzProblem(1.0, 0.05, rhs, 1e-12), grid)
    b = helmholtz_solve(HelmholtzProblem(1.0, 0.05, rhs, 1e-12, diag_scaling=True), grid)
    np.testing.assert_allclose(a, b, atol=1e-10)


class TestSmoother:
    def test_zero_eps_is_identity(self, grid, rng):
        z = rng.standard_normal(grid.dims)
        assert np.array_equal(smoother_apply(z, 0.0, grid), z)

    def test_constants_preserved(self, grid):
        np.testing.assert_allclose(smoother_apply(grid.full(1.7), 0.3, grid), 1.7, rtol=1e-13)

    def test_negative_eps(self, grid):
        with pytest.raises(ValueError):
            smoother_apply(grid.zeros(), -1.0, grid)

    def test_mean_and_distance(self):
        g = Grid((64,), (1.0,))
        x = g.centers()[0]
        z = 1.0 + np.cos(np.pi * x) + 0.3 * np.cos(3 * np.pi * x)
        eps = 1e-3
        v = smoother_apply(z, eps, g, tol=1e-13)
        assert abs(integrate(v, g) - integrate(z, g)) <= 1e-10 * abs(integrate(z, g))
        # z - v = -eps L v, and ||v - z|| <= eps ||L z|| up to higher order terms
        np.testing.assert_allclose(z - v, -eps * laplacian_neumann(v, g), atol=1e-12)
        bound = eps * np.linalg.norm(laplacian_neumann(z, g))
        assert np.linalg.norm(v - z) <= bound * 1.01
