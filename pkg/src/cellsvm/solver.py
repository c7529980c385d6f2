"""Dual solvers for the four supported losses.

Every solver minimizes

    lam * ||f||_H^2  +  (1/n) * sum_i L(y_i, f(x_i)),    f = sum_i beta_i k(x_i, .)

over the expansion coefficients beta, and stops on the duality gap. The
libsvm-style cost parameter relates to lam via C = 1 / (2 * lam * n).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _optim
from .errors import NumericError

LOSSES = ("hinge", "least_squares", "pinball", "expectile")


def cost_to_lambda(cost: float, n: int) -> float:
    return 1.0 / (2.0 * cost * n)


def lambda_to_cost(lam: float, n: int) -> float:
    return 1.0 / (2.0 * lam * n)


@dataclass(frozen=True)
class LossSpec:
    """Loss kind plus its weight parameter.

    weight means: positive-class weight for hinge (negative class weighs 1);
    the level tau in (0,1) for pinball/expectile; ignored for least_squares.
    """

    kind: str
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSSES:
            raise ValueError(f"unknown loss {self.kind!r}")
        if self.kind == "hinge" and not self.weight > 0:
            raise ValueError("hinge weight must be > 0")
        if self.kind in ("pinball", "expectile") and not 0.0 < self.weight < 1.0:
            raise ValueError(f"{self.kind} level must lie in (0, 1)")


def loss_value(loss: LossSpec, y: float, t: float) -> float:
    if loss.kind == "hinge":
        if y not in (-1.0, 1.0):
            raise ValueError(f"hinge labels must be -1 or +1, got {y}")
        margin = max(0.0, 1.0 - y * t)
        return loss.weight * margin if y > 0 else margin
    if loss.kind == "least_squares":
        return (y - t) ** 2
    if loss.kind == "pinball":
        return loss.weight * (y - t) if y >= t else (1.0 - loss.weight) * (t - y)
    tau = loss.weight
    return tau * (y - t) ** 2 if y >= t else (1.0 - tau) * (y - t) ** 2


def loss_vector(loss: LossSpec, y: np.ndarray, t: np.ndarray) -> np.ndarray:
    if loss.kind == "hinge":
        w = np.where(y > 0, loss.weight, 1.0)
        return w * np.maximum(0.0, 1.0 - y * t)
    r = y - t
    if loss.kind == "least_squares":
        return r * r
    tau = loss.weight
    if loss.kind == "pinball":
        return np.where(r >= 0, tau * r, (tau - 1.0) * r)
    return np.where(r >= 0, tau, 1.0 - tau) * r * r


@dataclass
class SolverProblem:
    """One (loss, lambda) instance over a precomputed kernel matrix."""

    K: np.ndarray
    y: np.ndarray
    lam: float
    loss: LossSpec
    tolerance: float = 1e-3
    max_iterations: int | None = None  # coordinate updates; default 1e5 * n
    init: np.ndarray | None = None     # warm-start beta

    def __post_init__(self):
        self.K = np.ascontiguousarray(self.K, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        n = self.y.shape[0]
        if self.K.shape != (n, n):
            raise ValueError(f"kernel matrix shape {self.K.shape} does not match n={n}")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError("lambda must be positive and finite")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not np.all(np.isfinite(self.K)) or not np.all(np.isfinite(self.y)):
            raise NumericError("non-finite solver input")
        if self.loss.kind == "hinge" and not np.all(np.abs(self.y) == 1.0):
            raise ValueError("hinge labels must be -1/+1")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def update_limit(self) -> int:
        if self.max_iterations is not None:
            return int(self.max_iterations)
        return 100_000 * self.n


@dataclass
class SolverResult:
    beta: np.ndarray
    primal_objective: float
    dual_objective: float
    iterations: int
    converged: bool
    primal_trace: list = field(default_factory=list)
    dual_trace: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.primal_objective - self.dual_objective


def gap_scale(loss: LossSpec, primal: float) -> float:
    """Stopping scale: absolute gap for classification, relative for regression."""
    if loss.kind == "hinge":
        return 1.0
    return 1.0 + abs(primal)


def _box_bounds(problem: SolverProblem):
    n = problem.n
    C = 1.0 / (2.0 * problem.lam * n)
    if problem.loss.kind == "hinge":
        hi = np.where(problem.y > 0, problem.loss.weight * C, C)
        return np.zeros(n), hi
    tau = problem.loss.weight
    return np.full(n, C * (tau - 1.0)), np.full(n, C * tau)


def _project_box(problem: SolverProblem, beta: np.ndarray) -> np.ndarray:
    lo, hi = _box_bounds(problem)
    if problem.loss.kind == "hinge":
        alpha = np.clip(problem.y * beta, lo, hi)
        return problem.y * alpha
    return np.clip(beta, lo, hi)


def duality_gap(problem: SolverProblem, beta: np.ndarray):
    """(primal, dual) at beta. Box-constrained losses are projected first.

    For hinge both sides are evaluated at the clipped predictions: the primal
    uses the clipped loss and the dual is the Fenchel bound at the clipped
    margins, 2*lam*(sum alpha - beta.clip(t)) + lam*beta.t. This pairing is
    nonnegative for every box-feasible beta and exactly zero at the KKT point
    (the plain conjugate dual can exceed the clipped primal at the optimum
    whenever a prediction overshoots past the wrong margin)."""
    beta = np.asarray(beta, dtype=np.float64)
    loss = problem.loss
    if loss.kind in ("hinge", "pinball"):
        beta = _project_box(problem, beta)
    t = problem.K @ beta
    n = problem.n
    lam = problem.lam
    bt = float(beta @ t)
    if loss.kind == "hinge":
        pred = np.clip(t, -1.0, 1.0)
        primal = lam * bt + float(np.sum(loss_vector(loss, problem.y, pred))) / n
        alpha_sum = float(np.sum(problem.y * beta))
        dual = 2.0 * lam * (alpha_sum - float(beta @ pred)) + lam * bt
        return primal, dual
    primal = lam * bt + float(np.sum(loss_vector(loss, problem.y, t))) / n
    if loss.kind == "least_squares":
        dual = (2.0 * lam * float(problem.y @ beta)
                - n * lam * lam * float(beta @ beta) - lam * bt)
    elif loss.kind == "pinball":
        dual = 2.0 * lam * float(problem.y @ beta) - lam * bt
    else:
        tau = loss.weight
        tprime = np.where(beta >= 0, tau, 1.0 - tau)
        dual = (2.0 * lam * float(problem.y @ beta)
                - lam * lam * n * float(np.sum(beta * beta / tprime)) - lam * bt)
    return primal, dual


def warm_start_transform(prev_beta, prev_lam: float, new_lam: float, loss: LossSpec):
    """Carry coefficients along the lambda path.

    Box losses rescale by min(1, C_new/C_old) so the result stays feasible
    (a no-op when lambda decreases, since the box only grows); smooth losses
    reuse the coefficients unchanged.
    """
    beta = np.asarray(prev_beta, dtype=np.float64).copy()
    if loss.kind in ("hinge", "pinball"):
        factor = min(1.0, prev_lam / new_lam)
        beta *= factor
    return beta


def _finalize(problem: SolverProblem, beta: np.ndarray, iterations: int,
              trace=None, trace_dual=None) -> SolverResult:
    if not np.all(np.isfinite(beta)):
        raise NumericError("solver produced non-finite coefficients")
    primal, dual = duality_gap(problem, beta)
    converged = (primal - dual) <= problem.tolerance * gap_scale(problem.loss, primal)
    return SolverResult(beta=beta, primal_objective=primal, dual_objective=dual,
                        iterations=iterations, converged=converged,
                        primal_trace=list(trace) if trace is not None else [],
                        dual_trace=list(trace_dual) if trace_dual is not None else [])


def _init_beta(problem: SolverProblem) -> np.ndarray:
    if problem.init is None:
        return np.zeros(problem.n)
    beta = np.asarray(problem.init, dtype=np.float64).copy()
    if beta.shape != (problem.n,):
        raise ValueError("warm-start vector has wrong length")
    if problem.loss.kind in ("hinge", "pinball"):
        beta = _project_box(problem, beta)
    return beta


def _solve_smooth(problem: SolverProblem, trace_every: int) -> SolverResult:
    n = problem.n
    lam = problem.lam
    y = problem.y
    beta = _init_beta(problem)
    max_cg = max(200, min(20 * n, problem.update_limit() // max(n, 1)))
    # residual target: for least squares gap == ||r||^2 / n, so squaring the
    # tolerance keeps the gap contract with headroom; the coefficients
    # themselves need the extra accuracy because ||beta - beta*|| can be as
    # large as ||r|| / (n * lam)
    target_rr = n * problem.tolerance * problem.tolerance
    trace = []
    if problem.loss.kind == "least_squares":
        ridge = np.full(n, n * lam)
        if trace_every > 0:
            trace.append(duality_gap(problem, beta)[0])
        iters, _ = _optim.cg_diag_ridge(problem.K, ridge, y, beta, target_rr, max_cg)
        if trace_every > 0:
            trace.append(duality_gap(problem, beta)[0])
        return _finalize(problem, beta, iters, trace)
    # expectile: semismooth Newton on the sign pattern of the residuals,
    # each pattern solved by CG on (K + diag(n*lam/tau')) beta = y
    tau = problem.loss.weight
    t = problem.K @ beta
    total = 0
    best = None
    seen = set()
    for _ in range(100):
        tprime = np.where(y - t >= 0, tau, 1.0 - tau)
        key = tprime.tobytes()
        ridge = n * lam / tprime
        iters, _ = _optim.cg_diag_ridge(problem.K, ridge, y, beta, target_rr, max_cg)
        total += iters
        t = problem.K @ beta
        primal, dual = duality_gap(problem, beta)
        if trace_every > 0:
            trace.append(primal)
        if best is None or primal < best[0]:
            best = (primal, beta.copy())
        if primal - dual <= problem.tolerance * gap_scale(problem.loss, primal):
            break
        if key in seen:
            break
        seen.add(key)
        if total >= problem.update_limit() // max(n, 1):
            break
    beta = best[1]
    return _finalize(problem, beta, total, trace)


def _solve_box(problem: SolverProblem, trace_every: int) -> SolverResult:
    n = problem.n
    beta = _init_beta(problem)
    lo, hi = _box_bounds(problem)
    mode = _optim.MODE_HINGE if problem.loss.kind == "hinge" else _optim.MODE_PINBALL
    v = problem.y * beta if mode == _optim.MODE_HINGE else beta.copy()
    max_updates = problem.update_limit()
    size = max_updates // trace_every + 2 if trace_every > 0 else 1
    trace_buf = np.empty(size)
    dual_buf = np.empty(size)
    updates, kernel_converged, n_traced = _optim.box_pair_solve(
        problem.K, problem.y, problem.lam, mode, problem.loss.weight,
        lo, hi, v, problem.tolerance, max_updates, trace_buf, dual_buf, trace_every)
    beta = problem.y * v if mode == _optim.MODE_HINGE else v
    trace = trace_buf[:n_traced] if trace_every > 0 else None
    dual_trace = dual_buf[:n_traced] if trace_every > 0 else None
    result = _finalize(problem, beta, updates, trace, dual_trace)
    result.converged = result.converged and bool(kernel_converged)
    return result


def solve(problem: SolverProblem, trace_every: int = 0) -> SolverResult:
    """Minimize the regularized empirical risk for the problem's loss.

    Deterministic for fixed inputs. Hitting the iteration limit returns a
    result with converged=False rather than raising. trace_every > 0 records
    the primal objective every that many coordinate updates (tests use this).
    """
    if problem.loss.kind in ("least_squares", "expectile"):
        return _solve_smooth(problem, trace_every)
    return _solve_box(problem, trace_every)
