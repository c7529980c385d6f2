import numpy as np
import pytest

from cellsvm.dataio import Dataset, make_folds
from cellsvm.errors import SelectionError
from cellsvm.kernel import KernelSpec, gram_matrix
from cellsvm.modelselect import (Grid, ValidationTable, _adaptive_search,
                                 adaptive_cross_validate, build_default_grid,
                                 build_libsvm_grid, cross_validate, finalize,
                                 select_best)
from cellsvm.solver import LossSpec, lambda_to_cost


def small_dataset(rng, n=60, dim=2, binary=True):
    X = rng.random((n, dim))
    if binary:
        y = np.where(X[:, 0] + 0.3 * rng.standard_normal(n) > 0.5, 1.0, -1.0)
    else:
        y = np.sin(3 * X[:, 0]) + 0.1 * rng.standard_normal(n)
    return Dataset(X, y)


class TestGrids:
    def test_default_sizes(self):
        for size, points in ((10, 100), (15, 225), (20, 400)):
            grid = build_default_grid(800, 4, size)
            assert grid.size() == points

    def test_default_endpoints(self):
        grid = build_default_grid(800, 4, 10)
        assert grid.gammas[0] == pytest.approx(5.0 * 2.0)
        assert grid.gammas[-1] == pytest.approx(0.2 * 2.0 * 800 ** -0.25)
        assert grid.lambdas[0] == pytest.approx(0.1)
        assert grid.lambdas[-1] == pytest.approx(0.001 / 800)

    def test_geometric_ratio(self):
        grid = build_default_grid(500, 3, 10)
        ratios = grid.gammas[1:] / grid.gammas[:-1]
        expected = (grid.gammas[-1] / grid.gammas[0]) ** (1.0 / 9.0)
        assert np.allclose(ratios, expected, rtol=1e-12)

    def test_libsvm_counts_and_values(self):
        grid = build_libsvm_grid(800)
        assert grid.size() == 110
        assert len(grid.gammas) == 10 and len(grid.lambdas) == 11
        gs = sorted((2.0 ** e for e in (3, 1, -1, -3, -5, -7, -9, -11, -13, -15)),
                    reverse=True)
        assert np.allclose(sorted(grid.gammas), sorted(g ** -0.5 for g in gs), rtol=1e-15)
        # costs map to lambdas via C = 1/(2 lam n)
        costs = sorted(lambda_to_cost(l, 800) for l in grid.lambdas)
        assert np.allclose(costs, sorted(2.0 ** e for e in range(-5, 16, 2)), rtol=1e-12)

    def test_libsvm_specific_conversions(self):
        grid = build_libsvm_grid(800)
        assert np.max(grid.gammas) == pytest.approx(2.0 ** 7.5, rel=1e-15)
        assert 8.0 ** -0.5 == pytest.approx(np.min(grid.gammas), rel=1e-15)
        assert 1.0 / 3200.0 in [pytest.approx(l, rel=1e-15) for l in grid.lambdas]

    def test_descending_required(self):
        with pytest.raises(ValueError):
            Grid(gammas=np.array([1.0, 2.0]), lambdas=np.array([1.0, 0.1]))


class TestCrossValidate:
    def test_counting_contract_single_point(self, rng):
        data = small_dataset(rng, 30)
        grid = Grid(gammas=np.array([1.0]), lambdas=np.array([0.01]))
        folds = make_folds(data.labels, 2, method="stratified", seed=0)
        table = cross_validate(data, LossSpec("hinge"), grid, folds)
        assert table.solve_count == 2
        assert table.gram_computations <= 2

    def test_counting_contract_full_grid(self, rng):
        data = small_dataset(rng, 40)
        grid = build_default_grid(20, 2, 10)
        folds = make_folds(data.labels, 3, method="stratified", seed=1)
        table = cross_validate(data, LossSpec("hinge"), grid, folds)
        assert table.gram_computations == 3 * 10
        assert table.solve_count == 3 * 100
        assert np.all(table.evaluated)

    def test_all_zero_model_error_counts_positive_fraction(self):
        # the exactly-zero decision predicts the lower class, so the zero
        # model's classification error is the +1 fraction (here the majority)
        from cellsvm.modelselect import classification_error
        y = np.array([1.0] * 14 + [-1.0] * 6)
        assert classification_error(np.zeros(20), y) == pytest.approx(0.7, abs=1e-15)

    def test_workers_do_not_change_results(self, rng):
        data = small_dataset(rng, 50)
        grid = build_default_grid(25, 2, 10)
        folds = make_folds(data.labels, 3, method="stratified", seed=3)
        t1 = cross_validate(data, LossSpec("hinge"), grid, folds, workers=1)
        t4 = cross_validate(data, LossSpec("hinge"), grid, folds, workers=4)
        assert np.array_equal(t1.mean_loss, t4.mean_loss)

    def test_planted_optimum_matches_direct_oracle(self, rng):
        # least squares: per-fold validation losses recomputed with the exact
        # linear-system solution must single out the same grid point
        data = small_dataset(rng, 48, binary=False)
        grid = Grid(gammas=np.geomspace(3.0, 0.05, 4),
                    lambdas=np.geomspace(0.5, 1e-4, 4))
        folds = make_folds(data.labels, 3, method="random", seed=5)
        table = cross_validate(data, LossSpec("least_squares"), grid, folds,
                               tolerance=1e-12)
        oracle = np.zeros((4, 4))
        for f in range(3):
            tr, va = folds.train_indices(f), folds.fold_indices(f)
            dtr, dva = data.subset(tr), data.subset(va)
            for gi, gamma in enumerate(grid.gammas):
                spec = KernelSpec("gaussian_rbf", float(gamma))
                K = gram_matrix(spec, dtr).values
                Kv = np.array([[np.exp(-np.sum((a - b) ** 2) / gamma ** 2)
                                for b in dtr.samples] for a in dva.samples])
                for li, lam in enumerate(grid.lambdas):
                    beta = np.linalg.solve(K + dtr.n * lam * np.eye(dtr.n), dtr.labels)
                    oracle[gi, li] += np.mean((dva.labels - Kv @ beta) ** 2) / 3
        assert np.max(np.abs(oracle - table.mean_loss)) <= 1e-5
        chosen = select_best(table, grid)
        gi, li = np.unravel_index(np.argmin(oracle), oracle.shape)
        assert (chosen.gamma_index, chosen.lambda_index) == (gi, li)


class TestSelectBest:
    def make_table(self, grid, losses, converged=True):
        G, L = grid.shape
        loss = np.asarray(losses, dtype=float)
        conv = np.full((1, G, L), converged) if np.isscalar(converged) \
            else np.asarray(converged)[None, :, :]
        return ValidationTable(grid=grid, mean_loss=loss, fold_loss=loss[None],
                               iterations=np.zeros((1, G, L), dtype=np.int64),
                               converged=conv, evaluated=np.isfinite(loss))

    def test_single_entry(self):
        grid = Grid(gammas=np.array([1.0]), lambdas=np.array([0.1]))
        table = self.make_table(grid, [[0.3]])
        chosen = select_best(table, grid)
        assert (chosen.gamma, chosen.lam) == (1.0, 0.1)

    def test_tie_prefers_larger_lambda(self):
        grid = Grid(gammas=np.array([1.0]), lambdas=np.array([0.5, 0.1]))
        table = self.make_table(grid, [[0.2, 0.2]])
        assert select_best(table, grid).lam == 0.5

    def test_tie_prefers_larger_gamma_after_lambda(self):
        grid = Grid(gammas=np.array([2.0, 1.0]), lambdas=np.array([0.5, 0.1]))
        table = self.make_table(grid, [[0.2, 0.3], [0.2, 0.4]])
        chosen = select_best(table, grid)
        assert (chosen.gamma, chosen.lam) == (2.0, 0.5)

    def test_converged_beats_unconverged_on_tie(self):
        grid = Grid(gammas=np.array([1.0]), lambdas=np.array([0.5, 0.1]))
        conv = np.array([[False, True]])
        table = self.make_table(grid, [[0.2, 0.2]], converged=conv)
        assert select_best(table, grid).lam == 0.1

    def test_all_unusable_raises(self):
        grid = Grid(gammas=np.array([1.0]), lambdas=np.array([0.1]))
        table = self.make_table(grid, [[np.nan]])
        with pytest.raises(SelectionError):
            select_best(table, grid)


class TestAdaptive:
    def test_level1_budget_on_10x10(self):
        # constant surface: coarse 5x5 plus the incumbent's neighborhood only
        calls = []

        def ev(points):
            calls.extend(points)
            return [1.0 for _ in points]

        losses = _adaptive_search((10, 10), ev, 1)
        assert len(losses) < 100
        assert len([p for p in losses]) >= 25

    def test_constant_surface_still_evaluates_best_neighborhood(self):
        losses = _adaptive_search((10, 10), lambda ps: [2.0] * len(ps), 1)
        best = min(losses.items(), key=lambda kv: (kv[1], kv[0][1], kv[0][0]))[0]
        for dg in (-1, 0, 1):
            for dl in (-1, 0, 1):
                q = (best[0] + dg, best[1] + dl)
                if 0 <= q[0] < 10 and 0 <= q[1] < 10:
                    assert q in losses

    @pytest.mark.parametrize("level", [1, 2])
    def test_unimodal_surface_matches_full_grid(self, level):
        G = L = 9
        for opt in [(0, 0), (3, 5), (8, 8), (4, 4), (7, 2)]:
            def ev(points):
                return [abs(p[0] - opt[0]) + abs(p[1] - opt[1]) for p in points]

            losses = _adaptive_search((G, L), ev, level)
            best = min(losses.items(), key=lambda kv: (kv[1], kv[0][1], kv[0][0]))[0]
            assert best == opt

    def test_real_run_marks_unevaluated(self, rng):
        data = small_dataset(rng, 40)
        grid = build_default_grid(20, 2, 10)
        folds = make_folds(data.labels, 3, method="stratified", seed=1)
        table = adaptive_cross_validate(data, LossSpec("hinge"), grid, folds,
                                        control_level=1)
        assert np.sum(table.evaluated) < 100
        assert np.all(np.isnan(table.mean_loss[~table.evaluated]))
        chosen = select_best(table, grid)
        # the winner's full in-grid neighborhood was evaluated
        for dg in (-1, 0, 1):
            for dl in (-1, 0, 1):
                g2, l2 = chosen.gamma_index + dg, chosen.lambda_index + dl
                if 0 <= g2 < 10 and 0 <= l2 < 10:
                    assert table.evaluated[g2, l2]


class TestFinalize:
    def test_retrain_single_matches_direct_solve(self, rng):
        data = small_dataset(rng, 40, binary=False)
        grid = Grid(gammas=np.array([1.0]), lambdas=np.array([0.01]))
        folds = make_folds(data.labels, 3, method="random", seed=2)
        table = cross_validate(data, LossSpec("least_squares"), grid, folds)
        chosen = select_best(table, grid)
        model = finalize(data, LossSpec("least_squares"), chosen, "retrain_single",
                         table, folds, tolerance=1e-12)
        assert len(model.sets) == 1
        K = gram_matrix(KernelSpec("gaussian_rbf", 1.0), data).values
        ref = np.linalg.solve(K + data.n * 0.01 * np.eye(data.n), data.labels)
        assert np.max(np.abs(model.sets[0].beta - ref)) <= 1e-6

    def test_keep_fold_models_packages_k_sets(self, rng):
        data = small_dataset(rng, 30)
        grid = Grid(gammas=np.array([1.0]), lambdas=np.array([0.05]))
        folds = make_folds(data.labels, 5, method="stratified", seed=0)
        table = cross_validate(data, LossSpec("hinge"), grid, folds, keep_betas=True)
        chosen = select_best(table, grid)
        model = finalize(data, LossSpec("hinge"), chosen, "keep_fold_models",
                         table, folds)
        assert len(model.sets) == 5
        for fold, fs in enumerate(model.sets):
            assert np.array_equal(fs.indices, folds.train_indices(fold))
            assert fs.beta.shape == (fs.indices.size,)
