import numpy as np
import pytest

from chemoctrl import Control, Grid, TimeGrid


def bumps(grid, cu=0.45, cv=0.6, wu=0.1, wv=0.15):
    """Smooth nonnegative initial data (two offset Gaussians)."""
    X = grid.mesh()
    ru = sum((x - cu) ** 2 for x in X)
    rv = sum((x - cv) ** 2 for x in X)
    return 0.5 + np.exp(-ru / (2 * wu**2)), 0.5 + 0.5 * np.exp(-rv / (2 * wv**2))


def dense_laplacian_1d(n, h):
    """Neumann Laplacian written out row by row with reflected ghost cells."""
    A = np.zeros((n, n))
    for i in range(n):
        for j in (i - 1, i + 1):
            k = min(max(j, 0), n - 1)  # ghost value equals the boundary cell
            A[i, k] += 1.0 / h**2
            A[i, i] -= 1.0 / h**2
    return A


def dense_laplacian(grid):
    mats = [dense_laplacian_1d(n, h) for n, h in zip(grid.dims, grid.spacing)]
    eyes = [np.eye(n) for n in grid.dims]
    total = np.zeros((grid.size, grid.size))
    for a in range(grid.ndim):
        term = np.ones((1, 1))
        for b in range(grid.ndim):
            term = np.kron(term, mats[b] if a == b else eyes[b])
        total += term
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_case():
    """1-D, 48 cells, 30 steps, control on the middle half."""
    grid = Grid((48,), (1.0,)).with_control_box(0.25, 0.75)
    tg = TimeGrid(0.5, 30)
    u0, v0 = bumps(grid)
    return grid, tg, u0, v0


@pytest.fixture
def small_case_2d():
    grid = Grid((12, 10), (1.0, 0.8)).with_control_box((0.2, 0.1), (0.7, 0.6))
    tg = TimeGrid(0.3, 12)
    u0, v0 = bumps(grid)
    return grid, tg, u0, v0


def random_control(grid, tg, rng, scale=0.5):
    return Control(scale * rng.standard_normal((tg.steps + 1,) + grid.dims), grid, tg)


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
