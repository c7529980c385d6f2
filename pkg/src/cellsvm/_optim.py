"""Numba kernels for the dual solvers.

Two engines cover the four losses:

* conjugate-gradient iterations on (K + diag(ridge)) beta = y for the
  smooth losses (least squares directly, expectile via semismooth-Newton
  reweighting in the wrapper), and
* two-coordinate dual ascent with exact 2-D box subproblems for the
  box-constrained losses (hinge, pinball), selecting the maximal
  KKT-violating pair each iteration.
"""

import numpy as np
from numba import njit

MODE_HINGE = 0
MODE_PINBALL = 1


@njit(cache=True, nogil=True)
def cg_diag_ridge(K, ridge, y, beta, target_rr, max_iter):
    """CG on (K + diag(ridge)) beta = y, warm-started from beta (in place).

    Stops when the squared residual norm reaches target_rr, on stagnation
    (no 1% improvement over 50 iterations), or at max_iter.
    Returns (iterations, final squared residual norm).
    """
    n = y.shape[0]
    r = np.empty(n)
    warm = False
    for j in range(n):
        if beta[j] != 0.0:
            warm = True
            break
    if warm:
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += K[i, j] * beta[j]
            r[i] = y[i] - s - ridge[i] * beta[i]
    else:
        for i in range(n):
            r[i] = y[i]
    p = r.copy()
    ap = np.empty(n)
    rr = 0.0
    for j in range(n):
        rr += r[j] * r[j]
    it = 0
    best = rr
    stall = 0
    while rr > target_rr and it < max_iter:
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += K[i, j] * p[j]
            ap[i] = s + ridge[i] * p[i]
        pap = 0.0
        for j in range(n):
            pap += p[j] * ap[j]
        if pap <= 0.0:
            break
        step = rr / pap
        rr_new = 0.0
        for j in range(n):
            beta[j] += step * p[j]
            r[j] -= step * ap[j]
            rr_new += r[j] * r[j]
        it += 1
        if rr_new < 0.99 * best:
            best = rr_new
            stall = 0
        else:
            stall += 1
        mix = rr_new / rr
        rr = rr_new
        if stall >= 50:
            break
        for j in range(n):
            p[j] = r[j] + mix * p[j]
    return it, rr


@njit(cache=True, nogil=True)
def _best_pair_step(ga, gb, qaa, qab, qbb, la, ua, lb, ub):
    """Exact maximizer of ga*da + gb*db - (qaa*da^2 + 2*qab*da*db + qbb*db^2)/2
    over the box [la,ua] x [lb,ub]. qaa, qbb > 0."""
    best_da = 0.0
    best_db = 0.0
    best_val = 0.0
    det = qaa * qbb - qab * qab
    if det > 1e-12 * qaa * qbb:
        da = (ga * qbb - gb * qab) / det
        db = (gb * qaa - ga * qab) / det
        if la <= da <= ua and lb <= db <= ub:
            val = ga * da + gb * db - 0.5 * (qaa * da * da + 2.0 * qab * da * db + qbb * db * db)
            if val > best_val:
                best_val = val
                best_da = da
                best_db = db
    # box edges plus the two single-coordinate moves (da or db pinned at 0)
    for da in (la, ua, 0.0):
        db = (gb - qab * da) / qbb
        if db < lb:
            db = lb
        elif db > ub:
            db = ub
        val = ga * da + gb * db - 0.5 * (qaa * da * da + 2.0 * qab * da * db + qbb * db * db)
        if val > best_val:
            best_val = val
            best_da = da
            best_db = db
    for db in (lb, ub, 0.0):
        da = (ga - qab * db) / qaa
        if da < la:
            da = la
        elif da > ua:
            da = ua
        val = ga * da + gb * db - 0.5 * (qaa * da * da + 2.0 * qab * da * db + qbb * db * db)
        if val > best_val:
            best_val = val
            best_da = da
            best_db = db
    return best_da, best_db, best_val


@njit(cache=True, nogil=True)
def box_pair_solve(K, y, lam, mode, weight, lo, hi, v, tol, max_updates,
                   trace, trace_dual, trace_every):
    """Dual ascent over box variables v, two coordinates per iteration.

    The first index is the maximal KKT violator; the second is chosen to
    maximize the exact gain of the 2-D box subproblem (this matters on
    near-singular kernel blocks, where sum-preserving transfer moves are the
    only fast ascent directions).

    mode 0 (hinge): v = alpha in [0, hi]; beta_i = y_i * alpha_i; the primal
    uses clipped predictions, paired with the dual evaluated at the clipped
    margins (2*lam*(sum(alpha) - beta.t_clip) + lam*beta.t); stops on an
    absolute gap <= tol.
    mode 1 (pinball): v = beta in [lo, hi]; stops on gap <= tol * (1 + |primal|).
    weight: positive-class weight (hinge) or the quantile level tau (pinball).

    Returns (coordinate updates, converged flag, n_traced).
    """
    n = y.shape[0]
    t = np.zeros(n)
    for i in range(n):
        vi = v[i]
        if vi != 0.0:
            bi = vi * y[i] if mode == MODE_HINGE else vi
            for j in range(n):
                t[j] += bi * K[i, j]
    updates = 0
    converged = False
    n_traced = 0
    next_trace = 0
    while updates < max_updates:
        # primal/dual from the maintained predictions
        bt = 0.0
        btc = 0.0
        dlin = 0.0
        loss = 0.0
        for j in range(n):
            bj = v[j] * y[j] if mode == MODE_HINGE else v[j]
            bt += bj * t[j]
            if mode == MODE_HINGE:
                dlin += v[j]
                tc = t[j]
                if tc > 1.0:
                    tc = 1.0
                elif tc < -1.0:
                    tc = -1.0
                btc += bj * tc
                m = 1.0 - y[j] * tc
                if m > 0.0:
                    loss += (weight if y[j] > 0.0 else 1.0) * m
            else:
                dlin += y[j] * v[j]
                r = y[j] - t[j]
                loss += weight * r if r >= 0.0 else (weight - 1.0) * r
        primal = lam * bt + loss / n
        if mode == MODE_HINGE:
            dual = 2.0 * lam * (dlin - btc) + lam * bt
        else:
            dual = 2.0 * lam * dlin - lam * bt
        gap = primal - dual
        if trace_every > 0 and updates >= next_trace and n_traced < trace.shape[0]:
            trace[n_traced] = primal
            # the ascent objective: the plain conjugate dual, which the pair
            # steps increase monotonically (the clipped pairing above wiggles)
            trace_dual[n_traced] = 2.0 * lam * dlin - lam * bt
            n_traced += 1
            next_trace += trace_every
        threshold = tol if mode == MODE_HINGE else tol * (1.0 + abs(primal))
        # first index: maximal KKT violation. subopt accumulates the
        # concavity bound sum_i grad_i * (feasible range), which dominates
        # D* - D; requiring it below threshold too closes the degenerate
        # zeros of the clipped gap (bound-pinned points with margin > 1).
        a = -1
        va = 0.0
        subopt = 0.0
        for i in range(n):
            g = (1.0 - y[i] * t[i]) if mode == MODE_HINGE else (y[i] - t[i])
            if g > 0.0 and v[i] < hi[i]:
                subopt += 2.0 * lam * g * (hi[i] - v[i])
                if g > va:
                    va = g
                    a = i
            elif g < 0.0 and v[i] > lo[i]:
                subopt += 2.0 * lam * (-g) * (v[i] - lo[i])
                if -g > va:
                    va = -g
                    a = i
        # the certificate bound gets the n-scaled budget (one epsilon per
        # sample); the gap itself stays at the plain threshold
        if gap <= threshold and subopt <= threshold * n:
            converged = True
            break
        if a < 0:
            converged = True
            break
        ga = (1.0 - y[a] * t[a]) if mode == MODE_HINGE else (y[a] - t[a])
        la = lo[a] - v[a]
        ua = hi[a] - v[a]
        qaa = K[a, a]
        # single-coordinate fallback step for a
        best_da = ga / qaa
        if best_da < la:
            best_da = la
        elif best_da > ua:
            best_da = ua
        best_db = 0.0
        best_b = -1
        best_gain = ga * best_da - 0.5 * qaa * best_da * best_da
        # second index: rank partners by the unconstrained 2-D gain (capped
        # near-singular blocks rank first, which is what makes transfer moves
        # on degenerate kernels cheap to find), then solve the top candidate's
        # box subproblem exactly
        cheap_best = -1.0
        cheap_j = -1
        ya = y[a]
        for j in range(n):
            if j == a:
                continue
            gb = (1.0 - y[j] * t[j]) if mode == MODE_HINGE else (y[j] - t[j])
            qab = ya * y[j] * K[a, j] if mode == MODE_HINGE else K[a, j]
            db_dir = gb * qaa - ga * qab
            if db_dir > 0.0:
                if v[j] >= hi[j]:
                    continue
            elif db_dir < 0.0:
                if v[j] <= lo[j]:
                    continue
            else:
                continue
            qbb = K[j, j]
            det = qaa * qbb - qab * qab
            num = ga * ga * qbb - 2.0 * ga * gb * qab + gb * gb * qaa
            denom = 2.0 * det
            floor = 2e-12 * qaa * qbb
            if denom < floor:
                denom = floor
            cheap = num / denom
            if cheap > cheap_best:
                cheap_best = cheap
                cheap_j = j
        if cheap_j >= 0:
            j = cheap_j
            gb = (1.0 - y[j] * t[j]) if mode == MODE_HINGE else (y[j] - t[j])
            qab = ya * y[j] * K[a, j] if mode == MODE_HINGE else K[a, j]
            da2, db2, gain2 = _best_pair_step(ga, gb, qaa, qab, K[j, j],
                                              la, ua, lo[j] - v[j], hi[j] - v[j])
            if gain2 > best_gain:
                best_gain = gain2
                best_b = j
                best_da = da2
                best_db = db2
        if best_gain <= 0.0:
            break
        da = best_da
        db = best_db
        b = best_b
        if da != 0.0:
            updates += 1
        if b >= 0 and db != 0.0:
            updates += 1
        if da != 0.0 or (b >= 0 and db != 0.0):
            ba = da * ya if mode == MODE_HINGE else da
            if b >= 0 and db != 0.0:
                bb = db * y[b] if mode == MODE_HINGE else db
                v[a] += da
                v[b] += db
                for j in range(n):
                    t[j] += ba * K[a, j] + bb * K[b, j]
            else:
                v[a] += da
                for j in range(n):
                    t[j] += ba * K[a, j]
        else:
            break
    return updates, converged, n_traced
