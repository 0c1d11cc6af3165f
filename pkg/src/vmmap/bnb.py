"""Branch-and-bound over server/edge switches with Lagrange bounding.

Each node carries fixings of theta (servers) and phi (edges).  Its bound is
the larger of the lifted LP relaxation (with accumulated Lagrange cuts) and
the Lagrange bound built from that LP's coupling duals.  Branching prefers
the switch on which the per-request copies disagree most with the shared
variable; once every switch is integral and consistent the remaining
placement problem goes to a MIP.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Instance, MappingSolution, validate_solution
from .formulations import (VarSpace, build_p1, build_p2, emit_connectivity_cuts,
                           objective_cap_row)
from .heuristics import HeuristicConfig, improve_local_branch, repair, solve_mapping
from .lagrange import (NO_FIXINGS, DualMultipliers, Fixings, LagrangeOutcome,
                       SubproblemInfeasible, evaluate_dual, extract_multipliers,
                       partition_requests)
from .lp import LpSession, ModelSystem, Row, solve_lp
from .mip import MipConfig
from .paths import PathTable

TOL = 1e-6


class NoCandidate(Exception):
    """Every switch is integral and consistent: nothing left to branch on."""


@dataclass(frozen=True)
class BnbConfig:
    eps: float = 0.005              # optimality tolerance
    delta: float = 0.05             # gap that triggers the repair heuristic at a node
    partition_delta: int = 1
    node_limit: int | None = None
    time_limit_s: float | None = None
    max_open: int = 100_000
    seed: int = 0
    heuristic: HeuristicConfig = field(default_factory=HeuristicConfig)
    sub_mip: MipConfig | None = None
    fallback_backend: str = "native"

    def __post_init__(self):
        if not 0 < self.eps < 1 or not 0 < self.delta < 1:
            raise ValueError("eps and delta must lie in (0, 1)")


@dataclass
class BnbNode:
    id: int
    parent: int | None
    depth: int
    fixings: Fixings
    lb: float
    local_cuts: tuple[Row, ...] = ()
    connected: bool = False         # connectivity rows certified on this path
    branched: tuple[str, int, int] | None = None
    parent_lag: LagrangeOutcome | None = field(default=None, repr=False)
    lag: LagrangeOutcome | None = field(default=None, repr=False)
    lp_x: np.ndarray | None = field(default=None, repr=False)
    multipliers: DualMultipliers | None = field(default=None, repr=False)
    lp_value: float = math.nan


@dataclass(frozen=True)
class Event:
    node: int
    parent: int | None
    fix: str
    lb: float
    global_lb: float
    ub: float
    action: str

    def as_dict(self) -> dict:
        return dict(node=self.node, parent=self.parent, fix=self.fix, lb=self.lb,
                    global_lb=self.global_lb, ub=self.ub, action=self.action)


@dataclass
class SolveReport:
    status: str          # optimal | infeasible | time_limit | node_limit | no_solution
    solution: MappingSolution | None
    upper_bound: float
    lower_bound: float
    nodes: int
    events: list[Event]
    root_lp: float = math.nan
    root_lagrange: float = math.nan
    seconds: float = 0.0
    cuts: int = 0

    @property
    def gap(self) -> float:
        if not math.isfinite(self.upper_bound):
            return math.inf
        return (self.upper_bound - self.lower_bound) / max(abs(self.upper_bound), 1e-9)


# -- pieces of one node step -----------------------------------------------------------

def pick_branch_variable(node: BnbNode, lag: LagrangeOutcome, lp_point: np.ndarray | None,
                         space: VarSpace, tol: float = 1e-6) -> tuple[str, int, str]:
    """(kind, index, rationale) of the next switch to branch on.

    Score: sum of the per-request argmins minus |R| times the shared argmin;
    the largest positive score wins (servers before edges, then lowest
    index).  With no inconsistency the most fractional LP value is taken.
    """
    n_r = len(space.inst.requests)
    th_fixed, ph_fixed = node.fixings.theta_map(), node.fixings.phi_map()
    best, best_score = None, tol
    th_sum, ph_sum = lag.theta_r_sum(), lag.phi_r_sum()
    for k in range(len(th_sum)):
        if k not in th_fixed:
            score = th_sum[k] - n_r * lag.theta_bar[k]
            if score > best_score:
                best, best_score = ("theta", k), score
    for e in range(len(ph_sum)):
        if e not in ph_fixed:
            score = ph_sum[e] - n_r * lag.phi_bar[e]
            if score > best_score:
                best, best_score = ("phi", e), score
    if best is not None:
        return best[0], best[1], "inconsistent"
    if lp_point is not None:
        cands = [("theta", k, lp_point[j]) for k, j in enumerate(space.theta) if k not in th_fixed]
        cands += [("phi", e, lp_point[j]) for e, j in enumerate(space.phi) if e not in ph_fixed]
        best, best_frac = None, tol
        for kind, idx, val in cands:
            frac = min(val - math.floor(val), math.ceil(val) - val)
            if frac > best_frac + 1e-12:
                best, best_frac = (kind, idx), frac
        if best is not None:
            return best[0], best[1], "most_fractional"
    raise NoCandidate()


def bound_sums(node_system: ModelSystem, ub: float) -> tuple[int, int] | None:
    """Floors of max sum(theta) and max sum(phi) over the node relaxation capped at ``ub``.

    Returns None when the capped relaxation is empty (the node can be fathomed).
    """
    vs: VarSpace = node_system.meta
    sys = node_system.relaxed()
    if math.isfinite(ub):
        sys = sys.with_rows([objective_cap_row(node_system, ub)])
    out = []
    for cols in (vs.theta, vs.phi):
        obj = np.zeros(sys.num_vars)
        obj[cols] = -1.0
        sol = solve_lp(sys.with_objective(obj))
        if not sol.optimal:
            return None
        out.append(int(math.floor(-sol.objective + TOL)))
    return out[0], out[1]


def connectivity_certified(u_theta: float, u_phi: float, inst: Instance) -> bool:
    """True when at most ``u_theta`` servers or ``u_phi`` edges force the used servers to be connected."""
    sizes = [req.size for req in inst.requests]
    if len(sizes) == 1:
        pair_min = 2 * sizes[0]
    else:
        s = sorted(sizes)
        pair_min = s[0] + s[1]
    return u_theta <= pair_min - 1 or u_phi <= pair_min - 3


def _fix_text(branched) -> str:
    if branched is None:
        return ""
    kind, idx, val = branched
    return f"{kind}[{idx}]={val}"


# -- driver ---------------------------------------------------------------------------

class _Tree:
    def __init__(self, inst: Instance, paths: PathTable, cfg: BnbConfig):
        self.inst, self.paths, self.cfg = inst, paths, cfg
        self.start = time.perf_counter()
        self.p2 = build_p2(inst, paths)
        self.space: VarSpace = self.p2.meta
        self.relaxed = self.p2.relaxed()
        self.session = LpSession(self.relaxed)
        self.base_rows = self.relaxed.num_rows
        self.p1 = build_p1(inst, paths)
        self.partition = partition_requests(len(inst.requests), cfg.partition_delta)
        self.pool: dict[tuple, Row] = {}
        self.conn_rows = emit_connectivity_cuts(self.space)
        self.incumbent: MappingSolution | None = None
        self.ub = math.inf
        self.events: list[Event] = []
        self.heap: list = []
        self.next_id = 0
        self.evals = 0
        self.pruned = math.inf      # smallest bound among nodes closed by the gap test
        self.repaired: set = set()
        self.polished: set = set()

    # bookkeeping

    def offer(self, sol: MappingSolution | None) -> bool:
        if sol is None or sol.objective >= self.ub - 1e-9:
            return False
        if not validate_solution(self.inst, self.paths, sol):
            return False
        self.incumbent, self.ub = sol, sol.objective
        return True

    def offer_assignment(self, lag: LagrangeOutcome):
        sol = MappingSolution.from_assignment(self.inst, self.paths, lag.assignment())
        self.offer(sol)

    def closed(self, lb: float) -> bool:
        return math.isfinite(self.ub) and lb >= self.ub - self.cfg.eps * abs(self.ub) - 1e-9

    def global_lb(self, extra: float = math.inf) -> float:
        open_lb = min((item[0] for item in self.heap), default=math.inf)
        return min(open_lb, extra, self.pruned, self.ub)

    def log(self, node: BnbNode, action: str, lb: float | None = None):
        lb = node.lb if lb is None else lb
        if action == "fathom_bound" or action.startswith("mip_fallback"):
            self.pruned = min(self.pruned, lb)
        self.events.append(Event(node.id, node.parent, _fix_text(node.branched),
                                 round(lb, 6), round(self.global_lb(lb), 6),
                                 round(self.ub, 6) if math.isfinite(self.ub) else math.inf, action))

    def new_node(self, **kw) -> BnbNode:
        node = BnbNode(id=self.next_id, **kw)
        self.next_id += 1
        return node

    # evaluation

    def node_system(self, node: BnbNode) -> ModelSystem:
        rows = list(self.pool.values()) + list(node.local_cuts)
        if node.connected:
            rows += self.conn_rows
        sys = self.relaxed.with_rows(rows)
        changes = {}
        for k, v in node.fixings.theta:
            changes[self.space.theta[k]] = (float(v), float(v))
        for e, v in node.fixings.phi:
            changes[self.space.phi[e]] = (float(v), float(v))
        return sys.with_bounds(changes) if changes else sys

    def solve_node_lp(self, node: BnbNode, sys: ModelSystem):
        self.session.delete_rows_from(self.base_rows)
        self.session.add_rows(sys.rows[self.base_rows:])
        self.session.set_bounds(sys.lower, sys.upper)
        self.session.sys = sys
        sol = self.session.solve()
        if sol.status not in ("optimal", "infeasible"):
            # warm start went astray; rebuild from scratch
            self.session = LpSession(self.relaxed)
            self.session.add_rows(sys.rows[self.base_rows:])
            self.session.set_bounds(sys.lower, sys.upper)
            self.session.sys = sys
            sol = self.session.solve()
        return sol

    def lagrange(self, node: BnbNode, v: DualMultipliers, previous=None) -> LagrangeOutcome:
        self.evals += 1
        return evaluate_dual(self.inst, self.paths, self.partition, v, node.fixings,
                             space=self.space, mip=self.cfg.sub_mip, previous=previous,
                             cut_tag=f"e{self.evals}")

    def store_cuts(self, node: BnbNode, lag: LagrangeOutcome):
        # cuts from subproblems with servers/edges switched off only hold below this node
        local = []
        for block, cut in zip(lag.blocks, lag.cuts):
            if block.restricted:
                local.append(cut)
            else:
                key = cut.key()
                if key not in self.pool:
                    self.pool[key] = cut
        if local:
            node.local_cuts = node.local_cuts + tuple(local)

    def full_evaluation(self, node: BnbNode) -> str | None:
        """LP + fresh multipliers + all subproblems; returns a fathoming action or None."""
        sys = self.node_system(node)
        sol = self.solve_node_lp(node, sys)
        if sol.status == "infeasible":
            return "fathom_infeasible"
        if not sol.optimal:
            raise RuntimeError(f"node relaxation ended with status {sol.status}")
        node.lp_x = sol.x
        node.lp_value = sol.objective
        v = extract_multipliers(sys, sol)
        node.multipliers = v
        try:
            # unchanged duals let the parent's still-admissible argmins be reused
            lag = self.lagrange(node, v, previous=node.parent_lag)
        except SubproblemInfeasible:
            return "fathom_subproblem"
        node.lag = lag
        node.lb = max(node.lb, sol.objective, lag.bound)
        self.store_cuts(node, lag)
        self.offer_assignment(lag)
        if self._lp_integral(self.p2, sol.x):
            sol_map = MappingSolution.from_assignment(self.inst, self.paths,
                                                      self.space.mapping_from(sol.x))
            if validate_solution(self.inst, self.paths, sol_map) and \
                    abs(sol_map.objective - sol.objective) <= 1e-6 * max(1.0, abs(sol.objective)):
                self.offer(sol_map)
                return "fathom_integral"
        return None

    def cheap_evaluation(self, node: BnbNode) -> str | None:
        """Same multipliers as the parent; only subproblems that used the closed switch are re-solved."""
        parent = node.parent_lag
        try:
            lag = self.lagrange(node, parent.multipliers, previous=parent)
        except SubproblemInfeasible:
            return "fathom_subproblem"
        node.lag = lag
        node.multipliers = parent.multipliers
        node.lb = max(node.lb, lag.bound)
        self.store_cuts(node, lag)
        self.offer_assignment(lag)
        return None

    @staticmethod
    def _lp_integral(sys: ModelSystem, x: np.ndarray) -> bool:
        ints = np.flatnonzero(sys.integer)
        return bool(np.all(np.abs(x[ints] - np.round(x[ints])) <= 1e-6))

    def mip_fallback(self, node: BnbNode) -> str:
        sys = self.p1
        changes = {}
        for k, v in node.fixings.theta:
            changes[sys.meta.theta[k]] = (float(v), float(v))
        for e, v in node.fixings.phi:
            changes[sys.meta.phi[e]] = (float(v), float(v))
        if node.connected:
            sys = sys.with_rows(emit_connectivity_cuts(sys.meta))
        if changes:
            sys = sys.with_bounds(changes)
        cfg = MipConfig(backend=self.cfg.fallback_backend, gap_tolerance=self.cfg.eps,
                        cutoff=self.ub, time_limit_s=self.remaining())
        sol, res = solve_mapping(sys, cfg)
        self.offer(sol)
        node.lb = max(node.lb, min(res.bound, self.ub))
        if res.status in ("time_limit", "node_limit"):
            return "mip_fallback_limit"
        return "mip_fallback"

    def remaining(self) -> float | None:
        if self.cfg.time_limit_s is None:
            return None
        return max(self.cfg.time_limit_s - (time.perf_counter() - self.start), 1e-3)

    def out_of_budget(self, nodes: int) -> str | None:
        if self.cfg.node_limit is not None and nodes >= self.cfg.node_limit:
            return "node_limit"
        if self.cfg.time_limit_s is not None and time.perf_counter() - self.start > self.cfg.time_limit_s:
            return "time_limit"
        return None

    def run_repair(self, lag: LagrangeOutcome, lb: float):
        # identical votes give an identical restricted model: solve it once
        key = (tuple(lag.theta_r_sum()), lag.assignment())
        if key not in self.repaired:
            self.repaired.add(key)
            res = repair(self.inst, self.paths, lag, self.cfg.heuristic, lb, base=self.p1,
                         improve=False)
            self.offer(res.solution)
        hc = self.cfg.heuristic
        if self.incumbent is None or self.incumbent.assign in self.polished:
            return
        if self.ub - lb >= hc.improve_trigger * self.ub:
            self.polished.add(self.incumbent.assign)
            self.offer(improve_local_branch(self.inst, self.paths, self.incumbent, hc, base=self.p1))

    def push(self, node: BnbNode):
        heapq.heappush(self.heap, (node.lb, node.depth * -1, node.id, node))


def solve(inst: Instance, paths: PathTable, cfg: BnbConfig | None = None) -> SolveReport:
    """Custom branch-and-bound; returns the incumbent, the proven bound and the node log."""
    cfg = cfg or BnbConfig()
    t = _Tree(inst, paths, cfg)
    root = t.new_node(parent=None, depth=0, fixings=NO_FIXINGS, lb=-math.inf)
    action = t.full_evaluation(root)
    root_lp = root.lp_value
    root_lag = root.lag.bound if root.lag is not None else math.nan
    if action in ("fathom_infeasible", "fathom_subproblem"):
        t.log(root, "infeasible")
        return SolveReport("infeasible", None, math.inf, math.inf, 1, t.events, root_lp, root_lag,
                           time.perf_counter() - t.start)
    t.run_repair(root.lag, root.lb)
    nodes = 0
    status = None
    t.push(root)
    evaluated = {root.id}
    while t.heap:
        status = t.out_of_budget(nodes)
        if status:
            break
        lb, _, _, node = heapq.heappop(t.heap)
        if t.closed(node.lb):
            t.log(node, "fathom_bound")
            continue
        nodes += 1
        action = None
        if node.id not in evaluated:
            evaluated.add(node.id)
            kind_val = node.branched
            parent = node.parent_lag
            cheap = (kind_val is not None and kind_val[0] == "theta" and kind_val[2] == 0
                     and parent is not None and parent.theta_r_sum()[kind_val[1]] > 0)
            action = t.cheap_evaluation(node) if cheap else t.full_evaluation(node)
            node.parent_lag = None
        if action is None and t.closed(node.lb):
            action = "fathom_bound"
        if action is None and math.isfinite(t.ub) and \
                t.ub - node.lb >= cfg.delta * abs(t.ub) and node.id != root.id:
            t.run_repair(node.lag, node.lb)
            if t.closed(node.lb):
                action = "fathom_bound"
        if action is None and not node.connected and math.isfinite(t.ub):
            sums = bound_sums(t.node_system(node), t.ub)
            if sums is None:
                action = "fathom_cap"
            elif connectivity_certified(sums[0], sums[1], inst):
                node.connected = True
        if action is not None:
            t.log(node, action)
            continue
        try:
            kind, idx, why = pick_branch_variable(node, node.lag, node.lp_x, t.space)
        except NoCandidate:
            if node.lp_x is None:
                # evaluated cheaply: refresh the relaxation before giving up on branching
                action = t.full_evaluation(node)
                if action is None and t.closed(node.lb):
                    action = "fathom_bound"
                if action is not None:
                    t.log(node, action)
                    continue
                try:
                    kind, idx, why = pick_branch_variable(node, node.lag, node.lp_x, t.space)
                except NoCandidate:
                    kind = None
            else:
                kind = None
            if kind is None:
                act = t.mip_fallback(node)
                t.log(node, act)
                if act == "mip_fallback_limit":
                    t.push(node)
                    status = "time_limit"
                    break
                continue
        t.log(node, f"branch_{why}")
        for val in (0, 1):
            fix = node.fixings.with_theta(idx, val) if kind == "theta" else node.fixings.with_phi(idx, val)
            child = t.new_node(parent=node.id, depth=node.depth + 1, fixings=fix, lb=node.lb,
                               local_cuts=node.local_cuts, connected=node.connected,
                               branched=(kind, idx, val), parent_lag=node.lag)
            t.push(child)
        if len(t.heap) > cfg.max_open:
            status = "node_limit"
            break
    lower = t.global_lb()
    if status is None:
        status = "optimal" if t.incumbent is not None else "infeasible"
    elif t.incumbent is None:
        status = "no_solution"
    return SolveReport(status, t.incumbent, t.ub, lower, nodes, t.events, root_lp, root_lag,
                       time.perf_counter() - t.start, len(t.pool))
