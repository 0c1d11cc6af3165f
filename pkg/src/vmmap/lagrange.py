"""Lagrange decomposition of the lifted model.

Relaxing the coupling rows (server CPU/memory reservations, edge bandwidth
reservations, the per-request copies of theta/phi and the aggregate edge
count row) splits the lifted model into one subproblem per block of
requests, one two-point problem per server and one per edge.  Each block
subproblem also yields a supporting inequality ("Lagrange cut") for the
lifted relaxation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Instance, MappingSolution
from .formulations import (CUT3, ETA, LAM, MU, SIG, ZETA, VarSpace, add_request_vars,
                           greedy_placement, request_block_rows, rows_request_connectivity,
                           _reservation_rows)
from .lp import LpSolution, ModelSystem, Row, SystemBuilder
from .mip import MipConfig, solve_mip
from .paths import PathTable

DECIMALS = 4


class MissingRow(KeyError):
    pass


class SubproblemInfeasible(RuntimeError):
    def __init__(self, block: tuple[int, ...]):
        self.block = block
        super().__init__(f"subproblem of requests {block} is infeasible")


@dataclass(frozen=True)
class Fixings:
    """Branching decisions on theta (servers) and phi (edges)."""

    theta: tuple[tuple[int, int], ...] = ()
    phi: tuple[tuple[int, int], ...] = ()

    def theta_map(self) -> dict[int, int]:
        return dict(self.theta)

    def phi_map(self) -> dict[int, int]:
        return dict(self.phi)

    def with_theta(self, k: int, value: int) -> "Fixings":
        if k in self.theta_map():
            raise ValueError(f"theta[{k}] is already fixed")
        return Fixings(tuple(sorted(self.theta + ((k, value),))), self.phi)

    def with_phi(self, e: int, value: int) -> "Fixings":
        if e in self.phi_map():
            raise ValueError(f"phi[{e}] is already fixed")
        return Fixings(self.theta, tuple(sorted(self.phi + ((e, value),))))

    def servers_off(self) -> set[int]:
        return {k for k, v in self.theta if v == 0}

    def edges_off(self) -> set[int]:
        return {e for e, v in self.phi if v == 0}


NO_FIXINGS = Fixings()


@dataclass(frozen=True, eq=False)
class DualMultipliers:
    """Nonnegative multipliers of the relaxed rows.

    ``conn`` and ``gamma`` belong to the connectivity cuts when a node's
    relaxation carries them (zero otherwise).
    """

    lam: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    rho: float = 0.0
    conn: float = 0.0
    gamma: np.ndarray | None = None

    def __post_init__(self):
        for name in ("lam", "mu", "sigma", "eta", "zeta"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"multiplier {name} must be finite and nonnegative")
        gamma = np.zeros(len(self.lam)) if self.gamma is None else np.asarray(self.gamma, float)
        object.__setattr__(self, "gamma", gamma)
        for name, val in (("rho", self.rho), ("conn", self.conn)):
            if not math.isfinite(val) or val < 0:
                raise ValueError(f"multiplier {name} must be finite and nonnegative")
        if np.any(gamma < 0):
            raise ValueError("multiplier gamma must be nonnegative")

    @classmethod
    def zeros(cls, inst: Instance) -> "DualMultipliers":
        n_r, n_s, n_e = len(inst.requests), inst.network.num_servers, inst.network.num_edges
        return cls(np.zeros(n_s), np.zeros(n_s), np.zeros(n_e),
                   np.zeros((n_r, n_s)), np.zeros((n_r, n_e)))

    def rounded(self, decimals: int = DECIMALS) -> "DualMultipliers":
        r = lambda a: np.round(a, decimals) + 0.0
        return DualMultipliers(r(self.lam), r(self.mu), r(self.sigma), r(self.eta), r(self.zeta),
                               float(r(self.rho)), float(r(self.conn)), r(self.gamma))

    def key(self) -> tuple:
        return tuple(np.concatenate([self.lam, self.mu, self.sigma, self.eta.ravel(),
                                     self.zeta.ravel(), [self.rho, self.conn], self.gamma]).tolist())


@dataclass(frozen=True)
class RequestPartition:
    blocks: tuple[tuple[int, ...], ...]
    delta: int

    def __post_init__(self):
        seen = [r for b in self.blocks for r in b]
        if len(seen) != len(set(seen)) or sorted(seen) != list(range(len(seen))):
            raise ValueError("blocks must partition the request ids")
        if any(not 1 <= len(b) <= self.delta for b in self.blocks):
            raise ValueError("block sizes must lie in [1, delta]")


def partition_requests(num_requests: int, delta: int) -> RequestPartition:
    """Consecutive blocks of ``delta`` requests; the last block may be smaller."""
    if delta < 1:
        raise ValueError("delta must be >= 1")
    ids = list(range(num_requests))
    return RequestPartition(tuple(tuple(ids[i:i + delta]) for i in range(0, num_requests, delta)),
                            delta)


# -- multipliers from a relaxation ----------------------------------------------------

def _row_multiplier(sys: ModelSystem, sol: LpSolution, name: str) -> float:
    try:
        return max(0.0, sol.multiplier(sys, name))
    except KeyError:
        raise MissingRow(name) from None


def extract_multipliers(sys: ModelSystem, sol: LpSolution, decimals: int | None = DECIMALS) -> DualMultipliers:
    """Read the coupling-row duals of an optimal lifted relaxation."""
    if not sol.optimal:
        raise ValueError("multipliers need an optimal relaxation")
    vs: VarSpace = sys.meta
    net = vs.inst.network
    n_r = len(vs.inst.requests)
    m = lambda name: _row_multiplier(sys, sol, name)
    lam = np.array([m(f"{LAM}[k={k}]") for k in range(net.num_servers)])
    mu = np.array([m(f"{MU}[k={k}]") for k in range(net.num_servers)])
    sigma = np.array([m(f"{SIG}[e={e}]") for e in range(net.num_edges)])
    eta = np.array([[m(f"{ETA}[r={r},k={k}]") for k in range(net.num_servers)] for r in range(n_r)])
    zeta = np.array([[m(f"{ZETA}[r={r},e={e}]") for e in range(net.num_edges)] for r in range(n_r)])
    rho = m(CUT3) if sys.has_row(CUT3) else 0.0
    conn = m("CONN") if sys.has_row("CONN") else 0.0
    gamma = np.array([m(f"CONN[k={k}]") if sys.has_row(f"CONN[k={k}]") else 0.0
                      for k in range(net.num_servers)])
    v = DualMultipliers(lam, mu, sigma, eta, zeta, rho, conn, gamma)
    return v.rounded(decimals) if decimals is not None else v


# -- server and edge pieces -----------------------------------------------------------

def server_coefficient(inst: Instance, k: int, v: DualMultipliers) -> float:
    s = inst.network.servers[k]
    return (s.fixed_cost - s.cpu * v.lam[k] - s.mem * v.mu[k] - v.eta[:, k].sum()
            + v.conn + v.gamma[k])


def edge_coefficient(inst: Instance, e: int, v: DualMultipliers) -> float:
    ed = inst.network.edges[e]
    return (ed.fixed_cost - ed.bandwidth * v.sigma[e] - v.zeta[:, e].sum() - v.rho
            - v.conn - v.gamma[ed.u] - v.gamma[ed.v])


def _two_point(coef: float, fixed: int | None) -> tuple[float, int]:
    if fixed is not None:
        return coef * fixed, int(fixed)
    # a zero coefficient keeps the variable at 0
    return (coef, 1) if coef < 0 else (0.0, 0)


def evaluate_server(inst: Instance, k: int, v: DualMultipliers, fixed: int | None = None):
    """(D^k, theta_bar_k): minimum of the server's reduced fixed cost over {0, 1}."""
    return _two_point(server_coefficient(inst, k, v), fixed)


def evaluate_edge(inst: Instance, e: int, v: DualMultipliers, fixed: int | None = None):
    """(D^e, phi_bar_e): minimum of the edge's reduced fixed cost over {0, 1}."""
    return _two_point(edge_coefficient(inst, e, v), fixed)


# -- block subproblems ---------------------------------------------------------------

@dataclass
class SubSpace(VarSpace):
    block: tuple[int, ...] = ()
    owner: int = 0


def build_subproblem(block: Sequence[int], inst: Instance, paths: PathTable, v: DualMultipliers,
                     fixings: Fixings = NO_FIXINGS, full_rlt: bool = False) -> ModelSystem:
    """The per-block piece of the Lagrangian as a 0-1 program.

    Block-level reservations w, z, kappa cover the load of all requests in
    the block; theta/phi copies stay per request.
    """
    block = tuple(block)
    b = SystemBuilder()
    vs = SubSpace(inst, paths, full_rlt=full_rlt, lifted=True, block=block, owner=block[0])
    net = inst.network
    off_s, off_e = fixings.servers_off(), fixings.edges_off()
    for r in block:
        add_request_vars(b, vs, r)
    o = vs.owner
    for k, s in enumerate(net.servers):
        vs.w[(o, k)] = b.add_var(f"w[r={o},k={k}]", 0, s.cpu, v.lam[k])
        vs.z[(o, k)] = b.add_var(f"z[r={o},k={k}]", 0, s.mem, v.mu[k])
    for e, ed in enumerate(net.edges):
        vs.kappa[(o, e)] = b.add_var(f"kappa[r={o},e={e}]", 0, ed.bandwidth, v.sigma[e])
    for r in block:
        for k in range(net.num_servers):
            vs.theta_r[(r, k)] = b.add_var(f"thetar[r={r},k={k}]", 0, 0 if k in off_s else 1,
                                           v.eta[r, k], binary=True)
        for e in range(net.num_edges):
            vs.phi_r[(r, e)] = b.add_var(f"phir[r={r},e={e}]", 0, 0 if e in off_e else 1,
                                         v.zeta[r, e], binary=True)
    for r in block:
        request_block_rows(b, vs, r, location_sense="=")
        rows_request_connectivity(b, vs, r)
    _reservation_rows(b, vs, block, o)
    return b.build(meta=vs)


def induced_point(sys: ModelSystem, assign: dict[int, Sequence[int]]) -> np.ndarray:
    """Cheapest subproblem point for a fixed placement of the block's VMs."""
    vs: SubSpace = sys.meta
    inst, paths = vs.inst, vs.paths
    o = vs.owner
    x = np.zeros(sys.num_vars)
    for r in vs.block:
        req = inst.requests[r]
        row = assign[r]
        for i, k in enumerate(row):
            x[vs.x[(r, i, k)]] = 1.0
            x[vs.theta_r[(r, k)]] = 1.0
            x[vs.w[(o, k)]] += req.vms[i].cpu
            x[vs.z[(o, k)]] += req.vms[i].mem
        for (i, j) in vs.pairs[r]:
            x[vs.y[(r, i, j, row[i], row[j])]] = 1.0
        for lk in req.links:
            for e in paths.path(row[lk.i], row[lk.j]):
                x[vs.kappa[(o, e)]] += lk.traffic
                x[vs.phi_r[(r, e)]] = 1.0
    return x


def _sub_heuristic(sys: ModelSystem):
    vs: SubSpace = sys.meta
    blocked = {k for k in range(vs.inst.network.num_servers)
               if all(sys.upper[vs.theta_r[(r, k)]] < 0.5 for r in vs.block)}

    def run(xlp: np.ndarray):
        weights = {key: float(xlp[j]) for key, j in vs.x.items()}
        sub_inst = _BlockView(vs.inst, vs.block)
        placed = greedy_placement(sub_inst, {(sub_inst.local(r), i, k): w
                                             for (r, i, k), w in weights.items()},
                                  lambda k: k not in blocked)
        if placed is None:
            return None
        return induced_point(sys, {r: placed[sub_inst.local(r)] for r in vs.block})

    return run


class _BlockView:
    """Just enough of an Instance for greedy placement of a block's requests."""

    def __init__(self, inst: Instance, block: tuple[int, ...]):
        self.network = inst.network
        self.requests = [inst.requests[r] for r in block]
        self._local = {r: n for n, r in enumerate(block)}

    def local(self, r: int) -> int:
        return self._local[r]


@dataclass
class BlockResult:
    block: tuple[int, ...]
    value: float
    assign: dict[int, tuple[int, ...]]
    theta_r: dict[int, np.ndarray]
    phi_r: dict[int, np.ndarray]
    w: np.ndarray
    z: np.ndarray
    kappa: np.ndarray
    restricted: bool = False
    nodes: int = 0

    def respects(self, fixings: Fixings) -> bool:
        off_s, off_e = fixings.servers_off(), fixings.edges_off()
        return not any(th[k] > 0.5 for th in self.theta_r.values() for k in off_s) and \
            not any(ph[e] > 0.5 for ph in self.phi_r.values() for e in off_e)


def sub_priority(sys: ModelSystem) -> np.ndarray:
    """Branch on the per-request server switches first, then edges, then VMs."""
    vs: SubSpace = sys.meta
    pr = np.zeros(sys.num_vars)
    pr[list(vs.theta_r.values())] = 3
    pr[list(vs.phi_r.values())] = 2
    pr[list(vs.x.values())] = 1
    return pr


def sub_mip_config(**overrides) -> MipConfig:
    base = dict(gap_tolerance=0.0, abs_gap=1e-6)
    base.update(overrides)
    return MipConfig(**base)


def solve_block(block: Sequence[int], inst: Instance, paths: PathTable, v: DualMultipliers,
                fixings: Fixings = NO_FIXINGS, mip: MipConfig | None = None,
                full_rlt: bool = False, hint: BlockResult | None = None) -> BlockResult:
    """Solve one block subproblem to optimality.

    ``hint`` (an earlier argmin of the same block) seeds the search with an
    incumbent when it is still admissible.
    """
    block = tuple(block)
    sys = build_subproblem(block, inst, paths, v, fixings, full_rlt)
    vs: SubSpace = sys.meta
    cfg = mip or sub_mip_config()
    if cfg.backend == "native":
        extra = {}
        if cfg.branch_priority is None:
            extra["branch_priority"] = sub_priority(sys)
        if cfg.heuristic is None:
            extra["heuristic"] = _sub_heuristic(sys)
        if cfg.initial is None and hint is not None and hint.respects(fixings):
            extra["initial"] = induced_point(sys, hint.assign)
        if extra:
            cfg = MipConfig(**{**cfg.__dict__, **extra})
    res = solve_mip(sys, cfg)
    if res.x is None:
        if res.status == "infeasible":
            raise SubproblemInfeasible(block)
        raise RuntimeError(f"subproblem {block} ended with status {res.status}")
    x = res.x
    net = inst.network
    assign = {r: tuple(int(np.argmax([x[vs.x[(r, i, k)]] for k in range(net.num_servers)]))
                       for i in range(inst.requests[r].size)) for r in block}
    o = vs.owner
    restricted = bool(fixings.servers_off() or fixings.edges_off())
    return BlockResult(
        block, float(min(res.bound, res.objective)), assign,
        {r: np.round([x[vs.theta_r[(r, k)]] for k in range(net.num_servers)]) for r in block},
        {r: np.round([x[vs.phi_r[(r, e)]] for e in range(net.num_edges)]) for r in block},
        np.array([x[vs.w[(o, k)]] for k in range(net.num_servers)]),
        np.array([x[vs.z[(o, k)]] for k in range(net.num_servers)]),
        np.array([x[vs.kappa[(o, e)]] for e in range(net.num_edges)]),
        restricted, res.nodes)


def lagrange_cut(space: VarSpace, block: Sequence[int], v: DualMultipliers, value: float,
                 tag: str = "") -> Row:
    """The block's Lagrangian piece >= its minimum, written over lifted-model columns."""
    inst = space.inst
    net = inst.network
    terms: dict[int, float] = {}

    def add(col, a):
        if a != 0.0:
            terms[col] = terms.get(col, 0.0) + a

    for r in block:
        for i, vm in enumerate(inst.requests[r].vms):
            for k, s in enumerate(net.servers):
                add(space.x[(r, i, k)], s.cpu_cost * vm.cpu)
        for k in range(net.num_servers):
            add(space.w[(r, k)], v.lam[k])
            add(space.z[(r, k)], v.mu[k])
            add(space.theta_r[(r, k)], v.eta[r, k])
        for e in range(net.num_edges):
            add(space.kappa[(r, e)], v.sigma[e])
            add(space.phi_r[(r, e)], v.zeta[r, e])
    name = "LAGCUT[" + ",".join(map(str, block)) + (f";{tag}" if tag else "") + "]"
    return Row.make(name, terms, ">=", value, "LAGRANGE")


@dataclass
class LagrangeOutcome:
    multipliers: DualMultipliers
    partition: RequestPartition
    blocks: list[BlockResult]
    server_values: np.ndarray
    theta_bar: np.ndarray
    edge_values: np.ndarray
    phi_bar: np.ndarray
    tau: float
    constant: float
    bound: float
    cuts: list[Row] = field(default_factory=list)

    def theta_r_sum(self) -> np.ndarray:
        return sum(th for b in self.blocks for th in b.theta_r.values())

    def phi_r_sum(self) -> np.ndarray:
        return sum(ph for b in self.blocks for ph in b.phi_r.values())

    def theta_r_of(self, r: int) -> np.ndarray:
        for b in self.blocks:
            if r in b.theta_r:
                return b.theta_r[r]
        raise KeyError(r)

    def assignment(self) -> tuple[tuple[int, ...], ...]:
        merged = {}
        for b in self.blocks:
            merged.update(b.assign)
        return tuple(merged[r] for r in sorted(merged))

    def reserved(self) -> tuple[np.ndarray, np.ndarray]:
        return sum(b.w for b in self.blocks), sum(b.z for b in self.blocks)


def evaluate_dual(inst: Instance, paths: PathTable, partition: RequestPartition,
                  v: DualMultipliers, fixings: Fixings = NO_FIXINGS,
                  space: VarSpace | None = None, mip: MipConfig | None = None,
                  previous: LagrangeOutcome | None = None, full_rlt: bool = False,
                  cut_tag: str = "") -> LagrangeOutcome:
    """Lower bound D(v) = sum of block, server and edge minima + tau - conn.

    ``previous`` lets blocks whose earlier argmin is still admissible under
    tighter ``fixings`` (and the same multipliers) be reused without a solve.
    With ``space`` (the lifted model's columns) one cut per block is emitted.
    Raises :class:`SubproblemInfeasible` when a block has no feasible point.
    """
    net = inst.network
    earlier = {b.block: b for b in previous.blocks} if previous is not None else {}
    same_v = previous is not None and previous.multipliers.key() == v.key()
    results = []
    for block in partition.blocks:
        old = earlier.get(block)
        if same_v and old is not None and old.respects(fixings):
            results.append(old)
        else:
            results.append(solve_block(block, inst, paths, v, fixings, mip, full_rlt, hint=old))
    th_fix, ph_fix = fixings.theta_map(), fixings.phi_map()
    sv = [evaluate_server(inst, k, v, th_fix.get(k)) for k in range(net.num_servers)]
    ev = [evaluate_edge(inst, e, v, ph_fix.get(e)) for e in range(net.num_edges)]
    tau = (inst.max_request_size - 1) * v.rho
    const = -v.conn
    total = (sum(b.value for b in results) + sum(d for d, _ in sv) + sum(d for d, _ in ev)
             + tau + const)
    cuts = []
    if space is not None:
        cuts = [lagrange_cut(space, b.block, v, b.value, cut_tag) for b in results]
    return LagrangeOutcome(v, partition, results,
                           np.array([d for d, _ in sv]), np.array([t for _, t in sv]),
                           np.array([d for d, _ in ev]), np.array([t for _, t in ev]),
                           tau, const, total, cuts)


def candidate_solution(inst: Instance, paths: PathTable, outcome: LagrangeOutcome) -> MappingSolution:
    """The mapping formed by the block argmins (not necessarily feasible jointly)."""
    return MappingSolution.from_assignment(inst, paths, outcome.assignment())
