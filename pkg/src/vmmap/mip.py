"""0-1 branch-and-bound over :func:`vmmap.lp.solve_lp`.

Best-bound node order with a depth-first plunge until the first incumbent;
branching on the most fractional variable of the highest priority class.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .lp import LpSession, ModelSystem, solve_lp


@dataclass
class MipConfig:
    time_limit_s: float | None = None
    gap_tolerance: float = 0.005
    feasibility_tolerance: float = 1e-4
    node_limit: int | None = None
    branch_priority: np.ndarray | None = None
    cutoff: float = math.inf
    initial: np.ndarray | None = None
    lp_method: str = "highs"
    backend: str = "native"
    abs_gap: float = 1e-7
    # maps a node LP point to a candidate integral point (or None)
    heuristic: Callable[[np.ndarray], np.ndarray | None] | None = None

    def __post_init__(self):
        if self.gap_tolerance < 0 or self.feasibility_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.backend not in ("native", "highs"):
            raise ValueError(f"unknown MIP backend {self.backend!r}")


@dataclass
class MipSolution:
    status: str  # optimal | infeasible | time_limit | node_limit | no_solution
    x: np.ndarray | None
    objective: float
    bound: float
    nodes: int = 0
    lp_solves: int = 0
    seconds: float = 0.0

    @property
    def has_solution(self) -> bool:
        return self.x is not None

    @property
    def gap(self) -> float:
        if self.x is None or not math.isfinite(self.objective):
            return math.inf
        return (self.objective - self.bound) / max(abs(self.objective), 1e-9)


def _fractional(x: np.ndarray, idx: np.ndarray, tol: float) -> np.ndarray:
    f = np.abs(x[idx] - np.round(x[idx]))
    return idx[f > tol]


def pick_fractional(x: np.ndarray, cand: np.ndarray, priority: np.ndarray | None) -> int:
    """Most fractional among the highest-priority class; ties to the lowest index."""
    if priority is not None:
        top = priority[cand].max()
        cand = cand[priority[cand] == top]
    frac = np.abs(x[cand] - np.round(x[cand]))
    best = np.flatnonzero(frac >= frac.max() - 1e-12)
    return int(cand[best[0]])


def _within(sys: ModelSystem, x: np.ndarray, fixed: dict[int, float], tol: float) -> bool:
    if any(abs(x[j] - v) > tol for j, v in fixed.items()):
        return False
    return sys.max_violation(x) <= tol


def _prune_level(ub: float, cfg: MipConfig) -> float:
    return ub - max(cfg.gap_tolerance * abs(ub), cfg.abs_gap)


def solve_mip(sys: ModelSystem, cfg: MipConfig | None = None) -> MipSolution:
    """Minimize over the 0-1 points of ``sys`` (integer columns must be binary)."""
    cfg = cfg or MipConfig()
    if cfg.backend == "highs":
        return _solve_highs(sys, cfg)
    start = time.perf_counter()
    ints = np.flatnonzero(sys.integer)
    tol = cfg.feasibility_tolerance
    incumbent: np.ndarray | None = None
    ub = cfg.cutoff
    if cfg.initial is not None:
        x0 = np.asarray(cfg.initial, dtype=float)
        if sys.max_violation(x0) <= tol and _fractional(x0, ints, tol).size == 0:
            obj0 = sys.objective_value(x0)
            if obj0 < ub:
                incumbent, ub = x0, obj0

    counter = itertools.count()
    heap: list = []
    nodes = lp_solves = 0
    pruned = math.inf   # smallest bound among nodes dropped by the gap test
    status = None

    session = LpSession(sys) if cfg.lp_method == "highs" else None

    def evaluate(fix: dict[int, float]):
        nonlocal lp_solves
        lo, hi = sys.lower.copy(), sys.upper.copy()
        for j, v in fix.items():
            lo[j] = hi[j] = v
        remaining = None
        if cfg.time_limit_s is not None:
            remaining = max(cfg.time_limit_s - (time.perf_counter() - start), 1e-3)
        lp_solves += 1
        if session is not None:
            session.set_bounds(lo, hi)
            return session.solve(remaining)
        return solve_lp(sys.with_bounds({j: (lo[j], hi[j]) for j in fix}), method=cfg.lp_method)

    stack = [(-math.inf, {})]   # plunge stack until an incumbent appears
    while stack or heap:
        if cfg.time_limit_s is not None and time.perf_counter() - start > cfg.time_limit_s:
            status = "time_limit"
            break
        if cfg.node_limit is not None and nodes >= cfg.node_limit:
            status = "node_limit"
            break
        if incumbent is None and stack:
            parent_bound, fix = stack.pop()
        else:
            if stack:
                for item in stack:
                    heapq.heappush(heap, (item[0], next(counter), item[1]))
                stack.clear()
            parent_bound, _, fix = heapq.heappop(heap)
        if parent_bound >= _prune_level(ub, cfg):
            pruned = min(pruned, parent_bound)
            continue
        nodes += 1
        sol = evaluate(fix)
        if sol.status == "time_limit":
            status = "time_limit"
            heapq.heappush(heap, (parent_bound, next(counter), fix))
            break
        if not sol.optimal:
            continue
        bound = max(sol.objective, parent_bound)
        if bound >= _prune_level(ub, cfg):
            pruned = min(pruned, bound)
            continue
        frac = _fractional(sol.x, ints, tol)
        if frac.size == 0:
            incumbent, ub = sol.x.copy(), sol.objective
            continue
        if cfg.heuristic is not None:
            cand = cfg.heuristic(sol.x)
            if cand is not None and _fractional(cand, ints, tol).size == 0:
                cand_obj = sys.objective_value(cand)
                if cand_obj < ub and _within(sys, cand, fix, tol):
                    incumbent, ub = cand, cand_obj
                    if bound >= _prune_level(ub, cfg):
                        pruned = min(pruned, bound)
                        continue
        j = pick_fractional(sol.x, frac, cfg.branch_priority)
        up, down = dict(fix), dict(fix)
        up[j], down[j] = 1.0, 0.0
        if incumbent is None:
            # visit the rounding direction first
            first, second = (up, down) if sol.x[j] >= 0.5 else (down, up)
            stack.append((bound, second))
            stack.append((bound, first))
        else:
            heapq.heappush(heap, (bound, next(counter), down))
            heapq.heappush(heap, (bound, next(counter), up))

    open_bounds = [item[0] for item in heap] + [item[0] for item in stack]
    global_bound = min([ub, pruned] + open_bounds)
    if status is None:
        if incumbent is not None:
            status = "optimal"
        else:
            status = "infeasible" if cfg.cutoff == math.inf else "no_solution"
    elif incumbent is None:
        status = "no_solution"
    obj = ub if incumbent is not None else math.inf
    return MipSolution(status, incumbent, obj, global_bound, nodes, lp_solves,
                       time.perf_counter() - start)


def _solve_highs(sys: ModelSystem, cfg: MipConfig) -> MipSolution:
    start = time.perf_counter()
    constraints = []
    if sys.num_rows:
        A = sys.matrix()
        b = sys.rhs()
        senses = np.array(sys.senses())
        lo = np.where(senses == "<=", -np.inf, b)
        hi = np.where(senses == ">=", np.inf, b)
        constraints.append(LinearConstraint(A, lo, hi))
    obj = sys.obj
    if math.isfinite(cfg.cutoff):
        nz = np.flatnonzero(obj)
        row = np.zeros((1, sys.num_vars))
        row[0, nz] = obj[nz]
        constraints.append(LinearConstraint(row, -np.inf, cfg.cutoff - sys.obj_offset))
    options = {"mip_rel_gap": cfg.gap_tolerance, "presolve": True}
    if cfg.time_limit_s is not None:
        options["time_limit"] = cfg.time_limit_s
    if cfg.node_limit is not None:
        options["node_limit"] = cfg.node_limit
    res = milp(obj, integrality=sys.integer.astype(int), bounds=Bounds(sys.lower, sys.upper),
               constraints=constraints, options=options)
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    bound = getattr(res, "mip_dual_bound", None)
    bound = (bound + sys.obj_offset) if bound is not None and np.isfinite(bound) else -math.inf
    elapsed = time.perf_counter() - start
    if res.x is not None:
        x = np.asarray(res.x)
        val = float(sys.objective_value(x))
        status = "optimal" if res.status == 0 else ("time_limit" if res.status == 1 else "node_limit")
        return MipSolution(status, x, val, min(bound, val), nodes, 0, elapsed)
    if res.status == 2:
        status = "infeasible" if cfg.cutoff == math.inf else "no_solution"
        return MipSolution(status, None, math.inf, math.inf, nodes, 0, elapsed)
    return MipSolution("no_solution", None, math.inf, bound, nodes, 0, elapsed)
