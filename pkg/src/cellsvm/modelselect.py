"""Hyper-parameter grids and k-fold cross-validation with kernel reuse.

The parallel grain is one (fold, gamma) unit: a worker owns the fold's Gram
matrix and walks the full lambda path on it with warm starts, so no mutable
state is shared. Results are merged on the coordinator in a fixed order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataio import Dataset, FoldAssignment
from .errors import SelectionError
from .kernel import KernelCache, KernelSpec, cross_matrix, gram_matrix, libsvm_g_to_gamma
from .solver import (LossSpec, SolverProblem, cost_to_lambda, loss_vector, solve,
                     warm_start_transform)

GRID_SOURCES = ("libsvm", "default10x10", "grid15", "grid20", "custom")

CV_TOLERANCE = 1e-3
FINAL_TOLERANCE = 1e-4


@dataclass(frozen=True)
class Grid:
    gammas: np.ndarray   # strictly descending
    lambdas: np.ndarray  # strictly descending
    weights: np.ndarray | None = None
    source: str = "custom"

    def __post_init__(self):
        gammas = np.asarray(self.gammas, dtype=np.float64)
        lambdas = np.asarray(self.lambdas, dtype=np.float64)
        for name, arr in (("gammas", gammas), ("lambdas", lambdas)):
            if arr.ndim != 1 or arr.size == 0:
                raise ValueError(f"{name} must be a nonempty vector")
            if not np.all(arr > 0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be positive and finite")
            if not np.all(np.diff(arr) < 0):
                raise ValueError(f"{name} must be strictly descending")
        object.__setattr__(self, "gammas", gammas)
        object.__setattr__(self, "lambdas", lambdas)
        if self.source not in GRID_SOURCES:
            raise ValueError(f"unknown grid source {self.source!r}")
        if self.source == "libsvm" and (len(gammas), len(lambdas)) != (10, 11):
            raise ValueError("libsvm grids are exactly 10 gammas x 11 costs")

    @property
    def shape(self):
        return len(self.gammas), len(self.lambdas)

    def size(self) -> int:
        return len(self.gammas) * len(self.lambdas)


def build_default_grid(n_fold: int, dim: int, size: int = 10) -> Grid:
    """Geometrically spaced grid with endpoints scaled to the fold size and
    dimension: gamma spans roughly nearest-neighbour to diameter scales on
    [0,1]^dim data, lambda from 0.1 down to 0.001 / n_fold."""
    if n_fold < 2:
        raise ValueError("n_fold must be >= 2")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if size not in (10, 15, 20):
        raise ValueError("grid size must be one of 10, 15, 20")
    g_max = 5.0 * np.sqrt(dim)
    g_min = 0.2 * np.sqrt(dim) * n_fold ** (-1.0 / dim)
    l_max = 0.1
    l_min = 0.001 / n_fold
    source = {10: "default10x10", 15: "grid15", 20: "grid20"}[size]
    return Grid(gammas=np.geomspace(g_max, g_min, size),
                lambdas=np.geomspace(l_max, l_min, size), source=source)


def build_libsvm_grid(n_fold: int) -> Grid:
    """The 10x11 libsvm-suggested grid, converted to bandwidths and lambdas."""
    if n_fold < 2:
        raise ValueError("n_fold must be >= 2")
    gs = [2.0 ** e for e in (3, 1, -1, -3, -5, -7, -9, -11, -13, -15)]
    costs = [2.0 ** e for e in (-5, -3, -1, 1, 3, 5, 7, 9, 11, 13, 15)]
    gammas = sorted((libsvm_g_to_gamma(g) for g in gs), reverse=True)
    lambdas = [cost_to_lambda(c, n_fold) for c in costs]
    return Grid(gammas=np.asarray(gammas), lambdas=np.asarray(lambdas), source="libsvm")


def classification_error(pred: np.ndarray, y: np.ndarray) -> float:
    """Error of the sign decision; a zero decision counts as the lower class."""
    labels = np.where(pred > 0, 1.0, -1.0)
    return float(np.mean(labels != y))


def default_val_metric(loss: LossSpec):
    if loss.kind == "hinge":
        return classification_error
    return lambda pred, y: float(np.mean(loss_vector(loss, y, pred)))


@dataclass
class ValidationTable:
    """Per-grid-point cross-validation results plus solver diagnostics."""

    grid: Grid
    mean_loss: np.ndarray        # (G, L), nan where not evaluated
    fold_loss: np.ndarray        # (k, G, L)
    iterations: np.ndarray       # (k, G, L)
    converged: np.ndarray        # (k, G, L) bool
    evaluated: np.ndarray        # (G, L) bool
    gram_computations: int = 0
    solve_count: int = 0
    betas: list | None = None            # [fold][g][l] -> coefficient vector
    fa_rate: np.ndarray | None = None    # (G, L) mean false-alarm rate
    det_rate: np.ndarray | None = None   # (G, L) mean detection rate

    def all_converged(self, gi: int, li: int) -> bool:
        return bool(np.all(self.converged[:, gi, li]))


@dataclass(frozen=True)
class SelectedPoint:
    gamma: float
    lam: float
    gamma_index: int
    lambda_index: int
    loss: float


@dataclass
class FittedSet:
    """Coefficients over one training subset (indices into the working set)."""

    indices: np.ndarray
    beta: np.ndarray


@dataclass
class SelectedModel:
    gamma: float
    lam: float
    mode: str                  # retrain_single | keep_fold_models
    sets: list                 # [FittedSet]; length 1 or k
    validation_loss: float
    converged: bool
    loss: LossSpec
    fa_rate: float | None = None
    det_rate: float | None = None


def _fold_unit(data: Dataset, loss: LossSpec, grid: Grid, folds: FoldAssignment,
               fold: int, gi: int, lambda_indices, val_metric, tolerance,
               max_iterations, keep_betas, track_rates, kernel_family):
    """Evaluate one (fold, gamma) unit over the given lambda path (descending)."""
    train_idx = folds.train_indices(fold)
    val_idx = folds.fold_indices(fold)
    train = data.subset(train_idx)
    val = data.subset(val_idx)
    spec = KernelSpec(kernel_family, float(grid.gammas[gi]))
    K = gram_matrix(spec, train).values
    K_val = cross_matrix(spec, val, train).values
    y_tr = train.labels
    y_val = val.labels
    out = []
    beta_prev = None
    lam_prev = None
    for li in lambda_indices:
        lam = float(grid.lambdas[li])
        init = None
        if beta_prev is not None:
            init = warm_start_transform(beta_prev, lam_prev, lam, loss)
        problem = SolverProblem(K=K, y=y_tr, lam=lam, loss=loss,
                                tolerance=tolerance, max_iterations=max_iterations,
                                init=init)
        result = solve(problem)
        beta_prev = result.beta
        lam_prev = lam
        pred = K_val @ result.beta
        if loss.kind == "hinge":
            pred = np.clip(pred, -1.0, 1.0)
        vloss = float(val_metric(pred, y_val))
        fa = det = None
        if track_rates:
            alarms = pred > 0
            neg = y_val < 0
            pos = ~neg
            fa = float(np.sum(alarms & neg) / max(1, np.sum(neg)))
            det = float(np.sum(alarms & pos) / max(1, np.sum(pos)))
        out.append((li, vloss, result.iterations, result.converged,
                    result.beta if keep_betas else None, fa, det))
    return out


def _cv_points(data: Dataset, loss: LossSpec, grid: Grid, folds: FoldAssignment,
               points, val_metric=None, workers: int = 1,
               tolerance: float = CV_TOLERANCE, max_iterations=None,
               keep_betas: bool = False, track_rates: bool = False,
               kernel_family: str = "gaussian_rbf",
               table: ValidationTable | None = None) -> ValidationTable:
    """Cross-validate the given set of (gamma_index, lambda_index) points."""
    G, L = grid.shape
    k = folds.k
    if val_metric is None:
        val_metric = default_val_metric(loss)
    if table is None:
        table = ValidationTable(
            grid=grid,
            mean_loss=np.full((G, L), np.nan),
            fold_loss=np.full((k, G, L), np.nan),
            iterations=np.zeros((k, G, L), dtype=np.int64),
            converged=np.zeros((k, G, L), dtype=bool),
            evaluated=np.zeros((G, L), dtype=bool),
            betas=[[[None] * L for _ in range(G)] for _ in range(k)] if keep_betas else None,
            fa_rate=np.full((G, L), np.nan) if track_rates else None,
            det_rate=np.full((G, L), np.nan) if track_rates else None,
        )
    by_gamma = {}
    for gi, li in points:
        if not table.evaluated[gi, li]:
            by_gamma.setdefault(gi, []).append(li)
    units = []
    for gi in sorted(by_gamma):
        lis = sorted(by_gamma[gi])  # lambdas descending along the path
        for fold in range(k):
            units.append((fold, gi, lis))
    if not units:
        return table

    def run(unit):
        fold, gi, lis = unit
        return fold, gi, _fold_unit(data, loss, grid, folds, fold, gi, lis,
                                    val_metric, tolerance, max_iterations,
                                    keep_betas, track_rates, kernel_family)

    if workers > 1 and len(units) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, units))
    else:
        results = [run(u) for u in units]
    table.gram_computations += len(units)
    fa_acc = {}
    for fold, gi, rows in results:
        for li, vloss, iters, conv, beta, fa, det in rows:
            table.fold_loss[fold, gi, li] = vloss
            table.iterations[fold, gi, li] = iters
            table.converged[fold, gi, li] = conv
            table.solve_count += 1
            if table.betas is not None:
                table.betas[fold][gi][li] = beta
            if fa is not None:
                fa_acc.setdefault((gi, li), []).append((fa, det))
    for gi, lis in by_gamma.items():
        for li in lis:
            table.mean_loss[gi, li] = float(np.mean(table.fold_loss[:, gi, li]))
            table.evaluated[gi, li] = True
            if table.fa_rate is not None and (gi, li) in fa_acc:
                pairs = fa_acc[(gi, li)]
                table.fa_rate[gi, li] = float(np.mean([p[0] for p in pairs]))
                table.det_rate[gi, li] = float(np.mean([p[1] for p in pairs]))
    return table


def cross_validate(data: Dataset, loss: LossSpec, grid: Grid, folds: FoldAssignment,
                   val_metric=None, workers: int = 1, tolerance: float = CV_TOLERANCE,
                   max_iterations=None, keep_betas: bool = False,
                   track_rates: bool = False,
                   kernel_family: str = "gaussian_rbf") -> ValidationTable:
    """Full-grid k-fold CV: exactly k * len(gammas) Gram computations and
    k * grid-size solver calls, lambdas visited large-to-small with warm starts."""
    G, L = grid.shape
    points = [(gi, li) for gi in range(G) for li in range(L)]
    return _cv_points(data, loss, grid, folds, points, val_metric, workers,
                      tolerance, max_iterations, keep_betas, track_rates,
                      kernel_family)


def _adaptive_search(shape, evaluate_batch, level: int):
    """Coarse-to-fine grid exploration.

    evaluate_batch(points) evaluates a list of (gi, li) and returns their
    losses. The full coarse sub-grid (stride level+1) is evaluated first;
    refinement then evaluates the +-1 neighborhoods of coarse points that are
    within 5% of the incumbent best AND strictly better than their coarse
    neighbors (so a flat surface degenerates to the incumbent alone), plus
    always the incumbent's neighborhood, iterating while the incumbent moves.
    Guaranteed to finish with the best point's neighborhood fully evaluated.
    Returns the dict of evaluated losses.
    """
    G, L = shape
    stride = level + 1
    losses = {}

    def evaluate(points):
        todo = [p for p in points if p not in losses]
        if todo:
            for p, v in zip(todo, evaluate_batch(todo)):
                losses[p] = v

    def neighbors(p, step=1):
        gi, li = p
        out = []
        for dg in (-step, 0, step):
            for dl in (-step, 0, step):
                g2, l2 = gi + dg, li + dl
                if 0 <= g2 < G and 0 <= l2 < L and (dg or dl):
                    out.append((g2, l2))
        return out

    coarse = [(gi, li) for gi in range(0, G, stride) for li in range(0, L, stride)]
    evaluate(coarse)
    coarse_set = set(coarse)
    while True:
        best = min(losses.items(), key=lambda kv: (kv[1], kv[0][1], kv[0][0]))[0]
        band = losses[best] * 1.05
        refine = {best}
        for p in coarse_set:
            if losses[p] <= band:
                around = [q for q in neighbors(p, stride) if q in coarse_set]
                if all(losses[p] < losses[q] for q in around):
                    refine.add(p)
        frontier = sorted({q for p in refine for q in neighbors(p) if q not in losses})
        if not frontier:
            return losses
        evaluate(frontier)


def adaptive_cross_validate(data: Dataset, loss: LossSpec, grid: Grid,
                            folds: FoldAssignment, control_level: int = 1,
                            val_metric=None, workers: int = 1,
                            tolerance: float = CV_TOLERANCE, max_iterations=None,
                            keep_betas: bool = False, track_rates: bool = False,
                            kernel_family: str = "gaussian_rbf") -> ValidationTable:
    """CV over an adaptively chosen subset of the grid (level 1: every 2nd
    point coarse, level 2: every 3rd). Unevaluated points stay NaN."""
    G, L = grid.shape
    if G < 4 or L < 4:
        raise ValueError("adaptive CV needs a grid of at least 4x4")
    if control_level not in (1, 2):
        raise ValueError("control_level must be 1 or 2")
    holder = {}

    def evaluate_batch(points):
        table = _cv_points(data, loss, grid, folds, points, val_metric, workers,
                           tolerance, max_iterations, keep_betas, track_rates,
                           kernel_family, table=holder.get("table"))
        holder["table"] = table
        return [float(table.mean_loss[p]) for p in points]

    _adaptive_search((G, L), evaluate_batch, control_level)
    return holder["table"]


def select_best(table: ValidationTable, grid: Grid) -> SelectedPoint:
    """Evaluated point with minimal mean loss; ties prefer converged points,
    then larger lambda, then larger gamma. Order-independent by construction."""
    G, L = grid.shape
    best = None
    best_key = None
    for gi in range(G):
        for li in range(L):
            if not table.evaluated[gi, li]:
                continue
            v = table.mean_loss[gi, li]
            if not np.isfinite(v):
                continue
            # lambdas/gammas are descending, so smaller index = larger value
            key = (v, 0 if table.all_converged(gi, li) else 1, li, gi)
            if best_key is None or key < best_key:
                best_key = key
                best = (gi, li)
    if best is None:
        raise SelectionError("no usable grid point (all failed or not evaluated)")
    gi, li = best
    return SelectedPoint(gamma=float(grid.gammas[gi]), lam=float(grid.lambdas[li]),
                         gamma_index=gi, lambda_index=li,
                         loss=float(table.mean_loss[gi, li]))


def finalize(data: Dataset, loss: LossSpec, selected: SelectedPoint, mode: str,
             table: ValidationTable, folds: FoldAssignment,
             tolerance: float = FINAL_TOLERANCE, max_iterations=None,
             cache: KernelCache | None = None, workers: int = 1,
             kernel_family: str = "gaussian_rbf") -> SelectedModel:
    """Build the deployable model at the selected point.

    retrain_single solves once on the full working set at the tight final
    tolerance; keep_fold_models packages the k fold solutions already produced
    during CV (requires cross_validate(..., keep_betas=True)).
    """
    if mode not in ("retrain_single", "keep_fold_models"):
        raise ValueError(f"unknown finalize mode {mode!r}")
    fa = det = None
    if table.fa_rate is not None:
        fa = float(table.fa_rate[selected.gamma_index, selected.lambda_index])
        det = float(table.det_rate[selected.gamma_index, selected.lambda_index])
    if mode == "keep_fold_models":
        if table.betas is None:
            raise ValueError("keep_fold_models requires CV run with keep_betas=True")
        sets = []
        ok = True
        for fold in range(folds.k):
            beta = table.betas[fold][selected.gamma_index][selected.lambda_index]
            sets.append(FittedSet(indices=folds.train_indices(fold), beta=beta))
            ok = ok and bool(table.converged[fold, selected.gamma_index, selected.lambda_index])
        return SelectedModel(gamma=selected.gamma, lam=selected.lam, mode=mode,
                             sets=sets, validation_loss=selected.loss,
                             converged=ok, loss=loss, fa_rate=fa, det_rate=det)
    spec = KernelSpec(kernel_family, selected.gamma)
    if cache is not None:
        K = cache.get(spec, data, workers=workers).values
    else:
        K = gram_matrix(spec, data, workers=workers).values
    problem = SolverProblem(K=K, y=data.labels, lam=selected.lam, loss=loss,
                            tolerance=tolerance, max_iterations=max_iterations)
    result = solve(problem)
    sets = [FittedSet(indices=np.arange(data.n), beta=result.beta)]
    return SelectedModel(gamma=selected.gamma, lam=selected.lam, mode=mode,
                         sets=sets, validation_loss=selected.loss,
                         converged=result.converged, loss=loss, fa_rate=fa, det_rate=det)
