"""Upper bounds: the repairing heuristic driven by Lagrange argmins, and
local-branching improvement of an incumbent."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import Instance, MappingSolution, validate_solution
from .formulations import (VarSpace, build_p1, emit_local_branching_row, mapping_priority,
                           rounding_heuristic, solution_point)
from .lagrange import LagrangeOutcome
from .lp import ModelSystem, Row, add_rows
from .mip import MipConfig, MipSolution, solve_mip
from .paths import PathTable


@dataclass(frozen=True)
class HeuristicConfig:
    n: int | None = None                 # vote threshold, default floor(|R|/2) (at least 1)
    mip_time_budget_s: float | None = None   # default 3 s per request
    mip_node_budget: int | None = None   # replaces the time budget when deterministic
    deterministic: bool = True
    improve_trigger: float = 0.05
    radius: int = 15
    mip_backend: str = "native"

    def __post_init__(self):
        if self.n is not None and self.n < 1:
            raise ValueError("vote threshold n must be >= 1")
        if self.radius < 0:
            raise ValueError("local-branch radius must be >= 0")

    def threshold(self, inst: Instance) -> int:
        n = self.n if self.n is not None else max(1, len(inst.requests) // 2)
        return min(n, len(inst.requests))

    def mip_config(self, inst: Instance, **extra) -> MipConfig:
        if self.deterministic:
            budget = dict(node_limit=self.mip_node_budget or 10 * len(inst.requests))
        else:
            budget = dict(time_limit_s=self.mip_time_budget_s or 3.0 * len(inst.requests),
                          node_limit=self.mip_node_budget)
        return MipConfig(backend=self.mip_backend, **budget, **extra)


@dataclass
class RepairResult:
    solution: MappingSolution | None
    upper_bound: float
    mip_solves: int
    released: list[int]
    improved: bool = False


def solve_mapping(sys: ModelSystem, cfg: MipConfig) -> tuple[MappingSolution | None, MipSolution]:
    """Run a mapping MIP and read back a validated mapping (None if none found)."""
    if cfg.backend == "native":
        cfg = replace(cfg, branch_priority=cfg.branch_priority if cfg.branch_priority is not None
                      else mapping_priority(sys),
                      heuristic=cfg.heuristic or rounding_heuristic(sys))
    res = solve_mip(sys, cfg)
    if res.x is None:
        return None, res
    vs: VarSpace = sys.meta
    sol = MappingSolution.from_assignment(vs.inst, vs.paths, vs.mapping_from(res.x))
    if not validate_solution(vs.inst, vs.paths, sol):
        return None, res
    return sol, res


def _aggregate_connectivity(vs: VarSpace) -> Row:
    terms = {j: 1.0 for j in vs.phi}
    for j in vs.theta:
        terms[j] = -1.0
    return Row.make("CONN", terms, ">=", -1.0, "CONNECTIVITY")


def repair(inst: Instance, paths: PathTable, lag: LagrangeOutcome, cfg: HeuristicConfig,
           lower_bound: float = -math.inf, base: ModelSystem | None = None,
           cutoff: float = math.inf, improve: bool = True) -> RepairResult:
    """Fix servers by the votes of the Lagrange argmins and solve what is left.

    Servers no request uses are switched off (with their edges); servers used
    by at least ``n`` requests are switched on and, when their reserved load
    fits, keep the argmin VMs.  While the restricted model has no solution the
    cheapest switched-off server is released.
    """
    net = inst.network
    p1 = base if base is not None else build_p1(inst, paths)
    vs: VarSpace = p1.meta
    sys = add_rows(p1, [_aggregate_connectivity(vs)])
    votes = lag.theta_r_sum()
    n = cfg.threshold(inst)
    on = [k for k in range(net.num_servers) if votes[k] >= n]
    off = [k for k in range(net.num_servers) if votes[k] == 0]
    w_bar, z_bar = lag.reserved()
    assign = lag.assignment()

    fixed: dict[int, tuple[float, float]] = {}
    for k in on:
        fixed[vs.theta[k]] = (1.0, 1.0)
        if net.servers[k].cpu - w_bar[k] >= 0 and net.servers[k].mem - z_bar[k] >= 0:
            for r, req in enumerate(inst.requests):
                for i in range(req.size):
                    val = 1.0 if assign[r][i] == k else 0.0
                    fixed[vs.x[(r, i, k)]] = (val, val)

    released: list[int] = []
    solves = 0
    mip_cfg = cfg.mip_config(inst, cutoff=cutoff)
    while True:
        bounds = dict(fixed)
        for k in off:
            bounds[vs.theta[k]] = (0.0, 0.0)
            for e in net.incident_edges(k):
                bounds[vs.phi[e]] = (0.0, 0.0)
        sol, _ = solve_mapping(sys.with_bounds(bounds), mip_cfg)
        solves += 1
        if sol is not None:
            break
        if not off:
            return RepairResult(None, math.inf, solves, released)
        k = min(off, key=lambda k: (net.servers[k].fixed_cost, k))
        off.remove(k)
        released.append(k)

    result = RepairResult(sol, sol.objective, solves, released)
    if improve and sol.objective - lower_bound >= cfg.improve_trigger * sol.objective:
        better = improve_local_branch(inst, paths, sol, cfg, base=p1)
        if better.objective < sol.objective - 1e-9:
            result.solution, result.upper_bound, result.improved = better, better.objective, True
    return result


def improve_local_branch(inst: Instance, paths: PathTable, incumbent: MappingSolution,
                         cfg: HeuristicConfig, base: ModelSystem | None = None) -> MappingSolution:
    """Best mapping within distance ``cfg.radius`` of the incumbent; never worse."""
    p1 = base if base is not None else build_p1(inst, paths)
    sys = add_rows(p1, [emit_local_branching_row(p1.meta, incumbent, cfg.radius)])
    mip_cfg = cfg.mip_config(inst, initial=solution_point(sys, incumbent),
                             cutoff=incumbent.objective + 1e-6)
    sol, _ = solve_mapping(sys, mip_cfg)
    if sol is None or sol.objective >= incumbent.objective - 1e-9:
        return incumbent
    return sol
