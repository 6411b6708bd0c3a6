import numpy as np
import pytest

from chemoctrl import Control, Grid, TimeGrid, simulate
from chemoctrl.objective import AdmissibleBox, ObjectiveWeights, TargetData
from chemoctrl.optimizer import (LineSearchError, OptimizerOptions, control_norm, fixed_point_control_update,
                                 fixed_point_iteration, optimize, projected_residual, reduced_gradient,
                                 variational_residual)

from conftest import bumps


@pytest.fixture(scope="module")
def box_case():
    """Targets from the uncontrolled run and a box excluding zero, so the lower bound is active."""
    grid = Grid((32,), (1.0,)).with_control_box(0.25, 0.75)
    tg = TimeGrid(0.5, 25)
    u0, v0 = bumps(grid)
    ref = simulate(u0, v0, Control.zeros(grid, tg), tg, grid)
    targets = TargetData(ref.u, ref.v)
    w = ObjectiveWeights(1, 1, 1)
    box = AdmissibleBox(0.1, 1.0)
    opts = OptimizerOptions(tol_opt=1e-6, max_iter=200, initial_control=Control.constant(0.5, grid, tg))
    res = optimize(u0, v0, targets, w, box, tg, grid, opts)
    return grid, tg, u0, v0, targets, w, box, opts, res


class TestOptimize:
    def test_constructed_optimum_from_zero(self, small_case):
        grid, tg, u0, v0 = small_case
        ref = simulate(u0, v0, Control.zeros(grid, tg), tg, grid)
        w = ObjectiveWeights(1, 1, 1e-2)
        res = optimize(u0, v0, TargetData(ref.u, ref.v), w, AdmissibleBox(), tg, grid)
        assert res.report.converged
        assert control_norm(res.control, 4) <= 1e-4
        assert res.report.J[-1] <= res.report.J[0]

    def test_box_active_converges_to_bound(self, box_case):
        grid, tg, *_, res = box_case
        assert res.report.converged
        on = res.control.values[:, grid.control_mask]
        assert np.max(np.abs(on - 0.1)) <= 1e-6

    def test_monotone_objective(self, box_case):
        res = box_case[-1]
        assert np.all(np.diff(res.report.J) <= 0)
        assert len(res.report.step) == len(res.report.J) - 1

    def test_variational_inequality(self, box_case):
        grid, tg, u0, v0, targets, w, box, opts, res = box_case
        rng = np.random.default_rng(7)
        for _ in range(100):
            trial = Control(rng.uniform(box.f_min, box.f_max, res.control.values.shape), grid, tg)
            assert variational_residual(res.control, res.gradient, trial) >= -10 * opts.tol_opt

    def test_agrees_with_fixed_point(self, box_case):
        grid, tg, u0, v0, targets, w, box, _, res = box_case
        f, _, _, changes = fixed_point_iteration(u0, v0, targets, w, box, tg, grid)
        assert control_norm(f.copy(f.values - res.control.values)) <= 1e-3
        assert changes[-1] <= 1e-10

    def test_residual_equals_gradient_norm_when_inactive(self, small_case, rng):
        grid, tg, u0, v0 = small_case
        targets = TargetData(np.full((tg.steps + 1,) + grid.dims, 0.5), np.zeros((tg.steps + 1,) + grid.dims))
        w = ObjectiveWeights(1, 1, 0.1)
        f = Control(0.2 * rng.standard_normal((tg.steps + 1,) + grid.dims), grid, tg)
        _, g, _, _ = reduced_gradient(u0, v0, f, targets, w, grid, tg)
        assert projected_residual(f, g, AdmissibleBox()) == pytest.approx(control_norm(g), rel=1e-14)

    def test_descends_on_nontrivial_problem(self, small_case):
        grid, tg, u0, v0 = small_case
        targets = TargetData(np.full((tg.steps + 1,) + grid.dims, 0.8), np.ones((tg.steps + 1,) + grid.dims))
        w = ObjectiveWeights(1, 1, 1e-2)
        res = optimize(u0, v0, targets, w, AdmissibleBox(-2, 2), tg, grid, OptimizerOptions(max_iter=5))
        J = np.array(res.report.J)
        assert J[-1] < J[0] and np.all(np.diff(J) <= 0)
        assert len(list(res.report.rows())) == len(J)

    def test_line_search_failure(self, small_case):
        grid, tg, u0, v0 = small_case
        targets = TargetData(np.full((tg.steps + 1,) + grid.dims, 0.8), np.ones((tg.steps + 1,) + grid.dims))
        opts = OptimizerOptions(max_iter=3, max_backtracks=0, tau0=1e6)
        with pytest.raises(LineSearchError) as info:
            optimize(u0, v0, targets, ObjectiveWeights(1, 1, 1e-2), AdmissibleBox(-2, 2), tg, grid, opts)
        assert info.value.result is not None

    def test_invalid_box(self, small_case):
        grid, tg, u0, v0 = small_case
        t = TargetData(np.ones((tg.steps + 1,) + grid.dims), np.ones((tg.steps + 1,) + grid.dims))
        with pytest.raises(ValueError):
            optimize(u0, v0, t, ObjectiveWeights(1, 1, 0), AdmissibleBox(), tg, grid)


class TestFixedPointUpdate:
    def test_zero_eta(self, small_case):
        grid, tg, _, _ = small_case
        shape = (tg.steps + 1,) + grid.dims
        f = fixed_point_control_update(np.ones(shape), np.zeros(shape), ObjectiveWeights(1, 0, 0.3),
                                       AdmissibleBox(), grid, tg)
        assert not f.values.any()

    def test_unit(self, small_case):
        grid, tg, _, _ = small_case
        shape = (tg.steps + 1,) + grid.dims
        a = 0.3
        f = fixed_point_control_update(np.ones(shape), np.full(shape, -a), ObjectiveWeights(1, 0, a),
                                       AdmissibleBox(), grid, tg)
        np.testing.assert_allclose(f.values[:, grid.control_mask], 1.0, rtol=1e-15)
        assert not f.values[:, ~grid.control_mask].any()

    def test_projected(self, small_case):
        grid, tg, _, _ = small_case
        shape = (tg.steps + 1,) + grid.dims
        f = fixed_point_control_update(np.ones(shape), np.full(shape, -8.0), ObjectiveWeights(1, 0, 1),
                                       AdmissibleBox(-1, 1), grid, tg)
        assert np.all(f.values[:, grid.control_mask] == 1.0)

    def test_needs_alpha_f(self, small_case):
        grid, tg, _, _ = small_case
        shape = (tg.steps + 1,) + grid.dims
        with pytest.raises(ValueError):
            fixed_point_control_update(np.ones(shape), np.ones(shape), ObjectiveWeights(1, 0, 0),
                                       AdmissibleBox(0, 1), grid, tg)
