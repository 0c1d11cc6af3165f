"""Bounded-variable primal revised simplex.

Each row ``a x (<=,=,>=) b`` gets a logical variable ``s`` with ``a x + s = b``;
its bounds encode the sense.  Phase I drives artificial variables to zero,
phase II minimizes the true objective.  The basis inverse is a dense LU
factorization plus a product-form eta file, refactored every
``REFACTOR_EVERY`` pivots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

REFACTOR_EVERY = 100
HARRIS_TOL = 1e-9
PIVOT_TOL = 1e-9
OPT_TOL = 1e-9
FEAS_TOL = 1e-7

AT_LOWER, AT_UPPER, BASIC = 0, 1, 2


class NumericalFailure(RuntimeError):
    pass


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray
    y: np.ndarray
    d: np.ndarray
    objective: float
    iterations: int
    head: np.ndarray | None = None
    state: np.ndarray | None = None


class _Basis:
    def __init__(self, columns, head):
        self.columns = columns
        self.head = head
        self.refactor()

    def refactor(self):
        m = len(self.head)
        B = np.zeros((m, m))
        for pos, j in enumerate(self.head):
            B[:, pos] = self.columns(j)
        try:
            with np.errstate(all="raise"):
                self.lu = la.lu_factor(B, check_finite=False)
        except (FloatingPointError, la.LinAlgError) as exc:
            raise NumericalFailure("basis factorization failed") from exc
        if np.min(np.abs(np.diag(self.lu[0]))) < 1e-11:
            raise NumericalFailure("singular basis")
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, a):
        v = la.lu_solve(self.lu, a, check_finite=False)
        for r, eta in self.etas:
            vr = v[r]
            if vr != 0.0:
                v += eta * vr
                v[r] = eta[r] * vr
        return v

    def btran(self, c):
        w = c.astype(float, copy=True)
        for r, eta in reversed(self.etas):
            w[r] = eta @ w
        return la.lu_solve(self.lu, w, trans=1, check_finite=False)

    def pivot(self, r, alpha, entering):
        eta = -alpha / alpha[r]
        eta[r] = 1.0 / alpha[r]
        self.etas.append((r, eta))
        self.head[r] = entering
        if len(self.etas) >= REFACTOR_EVERY:
            self.refactor()


def simplex_solve(c, A, senses, b, lower, upper, max_iter=None, warm=None) -> SimplexResult:
    """Minimize ``c x`` subject to ``A x (senses) b`` and ``lower <= x <= upper``.

    ``warm`` may carry ``(head, state)`` from a previous solve over the same
    columns (extra rows get their logical variable as basic); it is used only
    when the resulting point is primal feasible.
    """
    A = sp.csc_matrix(A, dtype=float)
    m, n = A.shape
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    lo = np.concatenate([np.asarray(lower, float), np.zeros(m)])
    hi = np.concatenate([np.asarray(upper, float), np.zeros(m)])
    for i, s in enumerate(senses):
        if s == "<=":
            hi[n + i] = np.inf
        elif s == ">=":
            lo[n + i] = -np.inf
    if np.any(~np.isfinite(lo[:n])) or np.any(~np.isfinite(hi[:n])):
        raise ValueError("structural variables need finite bounds")
    if np.any(lo > hi + 1e-12):
        return SimplexResult("infeasible", np.clip(lo[:n], None, hi[:n]), np.zeros(m), np.zeros(n), np.nan, 0)
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    n_art = 0
    art_row: list[int] = []
    art_sign: list[float] = []

    def column(j):
        if j < n:
            return A[:, j].toarray().ravel()
        e = np.zeros(m)
        if j < n + m:
            e[j - n] = 1.0
        else:
            k = j - n - m
            e[art_row[k]] = art_sign[k]
        return e

    if m == 0:
        x = np.where(c >= 0, lo[:n], hi[:n])
        return SimplexResult("optimal", x, np.zeros(0), c.copy(), float(c @ x), 0)

    x = np.zeros(n + m)
    state = np.full(n + m, AT_LOWER, dtype=np.int8)
    head = None

    if warm is not None:
        w_head, w_state = warm
        w_head = [int(j) for j in w_head]
        old_m = len(w_head)
        if old_m <= m and len(w_state) >= n + old_m:
            head = np.array(w_head + [n + i for i in range(old_m, m)], dtype=np.int64)
            state[:n] = w_state[:n]
            state[n:n + old_m] = w_state[n:n + old_m]
            state[n + old_m:] = AT_LOWER
            state[head] = BASIC
            for j in range(n + m):
                if state[j] == AT_LOWER and not np.isfinite(lo[j]):
                    state[j] = AT_UPPER
                elif state[j] == AT_UPPER and not np.isfinite(hi[j]):
                    state[j] = AT_LOWER
            nb = state != BASIC
            x[nb] = np.where(state[nb] == AT_LOWER, lo[nb], hi[nb])
            try:
                basis = _Basis(column, head.copy())
            except NumericalFailure:
                head = None
            else:
                rhs = b - A @ x[:n] - np.where(state[n:] == BASIC, 0.0, x[n:])
                xb = basis.ftran(rhs)
                if np.all(xb >= lo[head] - FEAS_TOL) and np.all(xb <= hi[head] + FEAS_TOL):
                    x[head] = xb
                else:
                    head = None

    if head is None:
        state[:] = AT_LOWER
        for j in range(n):
            if lo[j] == -np.inf:
                state[j] = AT_UPPER
        x[:n] = np.where(state[:n] == AT_LOWER, lo[:n], hi[:n])
        resid = b - A @ x[:n]
        head_list = []
        for i in range(m):
            j = n + i
            if lo[j] - FEAS_TOL <= resid[i] <= hi[j] + FEAS_TOL:
                head_list.append(j)
                x[j] = resid[i]
            else:
                # logical sits at its nearest bound, an artificial absorbs the rest
                if resid[i] > hi[j]:
                    x[j], state[j] = hi[j], AT_UPPER
                else:
                    x[j], state[j] = lo[j], AT_LOWER
                gap = resid[i] - x[j]
                art_row.append(i)
                art_sign.append(1.0 if gap > 0 else -1.0)
                head_list.append(n + m + n_art)
                n_art += 1
        total = n + m + n_art
        x = np.concatenate([x, np.zeros(n_art)])
        for k in range(n_art):
            x[n + m + k] = abs(resid[art_row[k]] - x[n + art_row[k]])
        lo = np.concatenate([lo, np.zeros(n_art)])
        hi = np.concatenate([hi, np.full(n_art, np.inf)])
        state = np.concatenate([state, np.full(n_art, AT_LOWER, dtype=np.int8)])
        head = np.array(head_list, dtype=np.int64)
        state[head] = BASIC
        basis = _Basis(column, head.copy())
    total = n + m + n_art

    cost2 = np.concatenate([c, np.zeros(m + n_art)])
    iterations = 0

    def reduced_costs(cost, y):
        d = np.empty(total)
        d[:n] = cost[:n] - A.T @ y
        d[n:n + m] = cost[n:n + m] - y
        for k in range(n_art):
            d[n + m + k] = cost[n + m + k] - art_sign[k] * y[art_row[k]]
        return d

    def run_phase(cost):
        nonlocal iterations, x
        best_obj = np.inf
        stall = 0
        bland = False
        stall_limit = 2 * (m + n)
        while True:
            if iterations >= max_iter:
                return "iteration_limit"
            head = basis.head
            y = basis.btran(cost[head])
            d = reduced_costs(cost, y)
            movable = (hi - lo) > 0
            can_up = (state == AT_LOWER) & movable & (d < -OPT_TOL)
            can_down = (state == AT_UPPER) & movable & (d > OPT_TOL)
            eligible = np.flatnonzero(can_up | can_down)
            if eligible.size == 0:
                return "optimal"
            if bland:
                q = int(eligible[0])
            else:
                q = int(eligible[np.argmax(np.abs(d[eligible]))])
            direction = 1.0 if state[q] == AT_LOWER else -1.0
            alpha = basis.ftran(column(q))
            g = -direction * alpha
            xb = x[head]
            lb, ub = lo[head], hi[head]
            with np.errstate(divide="ignore", invalid="ignore"):
                dec = g < -PIVOT_TOL
                inc = g > PIVOT_TOL
                relaxed = np.full(m, np.inf)
                relaxed[dec] = (xb[dec] - lb[dec] + HARRIS_TOL) / -g[dec]
                relaxed[inc] = (ub[inc] - xb[inc] + HARRIS_TOL) / g[inc]
            t_max = relaxed.min() if m else np.inf
            flip = hi[q] - lo[q]
            if flip <= t_max:
                t, r = flip, -1
            else:
                if not np.isfinite(t_max):
                    return "unbounded"
                exact = np.full(m, np.inf)
                exact[dec] = (xb[dec] - lb[dec]) / -g[dec]
                exact[inc] = (ub[inc] - xb[inc]) / g[inc]
                cand = np.flatnonzero(exact <= t_max)
                if bland:
                    r = int(cand[np.argmin(head[cand])])
                else:
                    r = int(cand[np.argmax(np.abs(g[cand]))])
                t = max(exact[r], 0.0)
            if not np.isfinite(t):
                return "unbounded"
            x[head] = xb + g * t
            x[q] += direction * t
            if r < 0:
                state[q] = AT_UPPER if direction > 0 else AT_LOWER
                x[q] = hi[q] if direction > 0 else lo[q]
            else:
                leaving = head[r]
                if g[r] < 0:
                    state[leaving], x[leaving] = AT_LOWER, lo[leaving]
                else:
                    state[leaving], x[leaving] = AT_UPPER, hi[leaving]
                state[q] = BASIC
                if abs(alpha[r]) < PIVOT_TOL:
                    raise NumericalFailure("pivot element too small")
                refactored = len(basis.etas) + 1 >= REFACTOR_EVERY
                basis.pivot(r, alpha, q)
                if refactored:
                    _recompute_basics()
            iterations += 1
            obj = float(cost @ x)
            if obj < best_obj - 1e-12 * (1 + abs(best_obj) if np.isfinite(best_obj) else 1):
                best_obj = obj
                stall = 0
                bland = False
            else:
                stall += 1
                if stall > stall_limit:
                    if bland:
                        raise NumericalFailure("no progress under Bland's rule")
                    bland = True
                    stall = 0

    def _recompute_basics():
        head = basis.head
        nb = np.ones(total, dtype=bool)
        nb[head] = False
        xs = np.where(nb, x, 0.0)
        rhs = b - A @ xs[:n] - xs[n:n + m]
        for k in range(n_art):
            rhs[art_row[k]] -= art_sign[k] * xs[n + m + k]
        x[head] = basis.ftran(rhs)

    if n_art:
        cost1 = np.concatenate([np.zeros(n + m), np.ones(n_art)])
        status = run_phase(cost1)
        if status != "optimal":
            return SimplexResult(status, x[:n].copy(), np.zeros(m), np.zeros(n), np.nan, iterations)
        basis.refactor()
        _recompute_basics()
        infeas = float(x[n + m:].sum())
        if infeas > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return SimplexResult("infeasible", x[:n].copy(), np.zeros(m), np.zeros(n), np.nan, iterations)
        hi[n + m:] = 0.0
        for k in range(n_art):
            j = n + m + k
            if state[j] != BASIC:
                state[j], x[j] = AT_LOWER, 0.0

    status = run_phase(cost2)
    basis.refactor()
    _recompute_basics()
    y = basis.btran(cost2[basis.head])
    d = c - A.T @ y
    xs = x[:n].copy()
    obj = float(c @ xs) if status == "optimal" else np.nan
    return SimplexResult(status, xs, y, d, obj, iterations,
                         basis.head.copy() if n_art == 0 or np.all(basis.head < n + m) else None,
                         state[:n + m].copy())
