"""Model builders: McCormick, RLT, the compact cut-strengthened model and
the lifted per-request model, plus the dynamic cut families.

Variable naming (stable, parsed by nobody but humans and the LP writer)::

    x[r=0,i=1,k=3]            VM i of request r on server k
    y[r=0,i=1,j=2,k=3,p=4]    product x[r,i,k] * x[r,j,p]; stored for i < j only,
                              the (j, i, p, k) orientation maps to the same column
    theta[k=3]  phi[e=2]      server / edge switched on
    w[r=0,k=3] z[..] kappa[r=0,e=2]  reserved CPU / memory / bandwidth (lifted)
    thetar[r=0,k=3] phir[r=0,e=2]    per-request copies of theta / phi (lifted)

Rows carry a ``family`` tag from :data:`FAMILIES`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import Instance, MappingSolution
from .lp import ModelSystem, Row, SystemBuilder
from .paths import PathTable

FAMILIES = ("AC", "LC", "KP", "KPM", "QCL", "MC", "AC_RLT", "LOC_RLT", "CUT1", "CUT2",
            "CUT3", "DISAGG", "RESERVE", "COUPLE", "LAGRANGE", "CONNECTIVITY",
            "LOCAL_BRANCH", "BOUND")

# names of the coupling rows that get relaxed by the decomposition
LAM, MU, SIG, ETA, ZETA, CUT3 = "LAM", "MU", "SIG", "ETA", "ZETA", "CUT3"


@dataclass
class VarSpace:
    """Index maps from model symbols to column positions."""

    inst: Instance
    paths: PathTable
    full_rlt: bool = False
    lifted: bool = False
    x: dict[tuple[int, int, int], int] = field(default_factory=dict)
    y: dict[tuple[int, int, int, int, int], int] = field(default_factory=dict)
    theta: list[int] = field(default_factory=list)
    phi: list[int] = field(default_factory=list)
    w: dict[tuple[int, int], int] = field(default_factory=dict)
    z: dict[tuple[int, int], int] = field(default_factory=dict)
    kappa: dict[tuple[int, int], int] = field(default_factory=dict)
    theta_r: dict[tuple[int, int], int] = field(default_factory=dict)
    phi_r: dict[tuple[int, int], int] = field(default_factory=dict)
    pairs: dict[int, list[tuple[int, int]]] = field(default_factory=dict)

    def y_index(self, r: int, i: int, j: int, k: int, p: int) -> int:
        """Column of y^{rij}_{kp} under the symmetric storage convention."""
        if i < j:
            return self.y[(r, i, j, k, p)]
        return self.y[(r, j, i, p, k)]

    def mapping_from(self, x: np.ndarray) -> tuple[tuple[int, ...], ...]:
        """Read the VM placement off a (near) integral point."""
        n_s = self.inst.network.num_servers
        assign = []
        for r, req in enumerate(self.inst.requests):
            row = []
            for i in range(req.size):
                vals = [x[self.x[(r, i, k)]] for k in range(n_s)]
                row.append(int(np.argmax(vals)))
            assign.append(tuple(row))
        return tuple(assign)

    def point_of(self, sol: MappingSolution, num_vars: int) -> np.ndarray:
        """Embed a mapping as a 0/1 point of the (unlifted part of the) space."""
        v = np.zeros(num_vars)
        for r, row in enumerate(sol.assign):
            for i, k in enumerate(row):
                v[self.x[(r, i, k)]] = 1.0
            for (i, j) in self.pairs[r]:
                v[self.y[(r, i, j, row[i], row[j])]] = 1.0
        for k, on in enumerate(sol.server_on):
            v[self.theta[k]] = float(on)
        for e, on in enumerate(sol.edge_on):
            v[self.phi[e]] = float(on)
        return v


def y_pairs(inst: Instance, r: int, full_rlt: bool) -> list[tuple[int, int]]:
    req = inst.requests[r]
    if full_rlt:
        return [(i, j) for i in range(req.size) for j in range(i + 1, req.size)]
    return [(lk.i, lk.j) for lk in req.links]


# -- variables ------------------------------------------------------------------

def add_request_vars(b: SystemBuilder, vs: VarSpace, r: int, with_cost: bool = True):
    """x and y columns of request ``r``; x carries its CPU-load cost."""
    inst, paths = vs.inst, vs.paths
    req = inst.requests[r]
    net = inst.network
    for i, vm in enumerate(req.vms):
        for k, s in enumerate(net.servers):
            cost = s.cpu_cost * vm.cpu if with_cost else 0.0
            vs.x[(r, i, k)] = b.add_var(f"x[r={r},i={i},k={k}]", 0, 1, cost, binary=True)
    pairs = y_pairs(inst, r, vs.full_rlt)
    vs.pairs[r] = pairs
    for (i, j) in pairs:
        for (k, p) in paths.pairs():
            vs.y[(r, i, j, k, p)] = b.add_var(f"y[r={r},i={i},j={j},k={k},p={p}]", 0, 1, 0.0)


def add_network_vars(b: SystemBuilder, vs: VarSpace):
    net = vs.inst.network
    vs.theta = [b.add_var(f"theta[k={k}]", 0, 1, s.fixed_cost, binary=True)
                for k, s in enumerate(net.servers)]
    vs.phi = [b.add_var(f"phi[e={e}]", 0, 1, ed.fixed_cost, binary=True)
              for e, ed in enumerate(net.edges)]


def add_lifted_vars(b: SystemBuilder, vs: VarSpace, r: int):
    net = vs.inst.network
    for k, s in enumerate(net.servers):
        vs.w[(r, k)] = b.add_var(f"w[r={r},k={k}]", 0, s.cpu, 0.0)
        vs.z[(r, k)] = b.add_var(f"z[r={r},k={k}]", 0, s.mem, 0.0)
        vs.theta_r[(r, k)] = b.add_var(f"thetar[r={r},k={k}]", 0, 1, 0.0, binary=True)
    for e, ed in enumerate(net.edges):
        vs.kappa[(r, e)] = b.add_var(f"kappa[r={r},e={e}]", 0, ed.bandwidth, 0.0)
        vs.phi_r[(r, e)] = b.add_var(f"phir[r={r},e={e}]", 0, 1, 0.0, binary=True)


# -- row families (each takes the request and the columns to use) ----------------

def rows_assignment(b: SystemBuilder, vs: VarSpace, r: int):
    req = vs.inst.requests[r]
    for i in range(req.size):
        b.add_row(f"AC[r={r},i={i}]",
                  {vs.x[(r, i, k)]: 1.0 for k in range(vs.inst.network.num_servers)},
                  "=", 1.0, "AC")


def rows_location(b: SystemBuilder, vs: VarSpace, r: int, on: Callable[[int], int],
                  sense: str = "<="):
    """sum_i x[r,i,k] (<= or =) on(k); ``=`` is the per-request strengthening."""
    req = vs.inst.requests[r]
    for k in range(vs.inst.network.num_servers):
        terms = {vs.x[(r, i, k)]: 1.0 for i in range(req.size)}
        terms[on(k)] = terms.get(on(k), 0.0) - 1.0
        b.add_row(f"LC[r={r},k={k}]", terms, sense, 0.0, "LC")


def rows_mccormick(b: SystemBuilder, vs: VarSpace, r: int):
    for (i, j) in vs.pairs[r]:
        for (k, p) in vs.paths.pairs():
            yv = vs.y[(r, i, j, k, p)]
            xi, xj = vs.x[(r, i, k)], vs.x[(r, j, p)]
            tag = f"r={r},i={i},j={j},k={k},p={p}"
            b.add_row(f"MCa[{tag}]", {xi: 1.0, xj: 1.0, yv: -1.0}, "<=", 1.0, "MC")
            b.add_row(f"MCb[{tag}]", {yv: 1.0, xi: -1.0}, "<=", 0.0, "MC")
            b.add_row(f"MCc[{tag}]", {yv: 1.0, xj: -1.0}, "<=", 0.0, "MC")


def rows_ac_rlt(b: SystemBuilder, vs: VarSpace, r: int):
    """sum_{k != p} y^{rij}_{kp} = x^{rj}_p for both orientations of each pair."""
    n_s = vs.inst.network.num_servers
    for (i, j) in vs.pairs[r]:
        for (a, c) in ((i, j), (j, i)):
            for p in range(n_s):
                terms = {vs.y_index(r, a, c, k, p): 1.0 for k in range(n_s) if k != p}
                terms[vs.x[(r, c, p)]] = -1.0
                b.add_row(f"AC_RLT[r={r},i={a},j={c},p={p}]", terms, "=", 0.0, "AC_RLT")


def rows_loc_rlt(b: SystemBuilder, vs: VarSpace, r: int, on: Callable[[int], int]):
    """sum over ordered VM pairs of y^{rij}_{kp} <= on(k), one row per ordered (k, p)."""
    if not vs.pairs[r]:
        return
    for (k, p) in vs.paths.pairs():
        terms: dict[int, float] = {}
        for (i, j) in vs.pairs[r]:
            for col in (vs.y[(r, i, j, k, p)], vs.y[(r, i, j, p, k)]):
                terms[col] = terms.get(col, 0.0) + 1.0
        terms[on(k)] = terms.get(on(k), 0.0) - 1.0
        b.add_row(f"LOC_RLT[r={r},k={k},p={p}]", terms, "<=", 0.0, "LOC_RLT")


def _link_pairs(vs: VarSpace, r: int) -> list[tuple[int, int]]:
    req = vs.inst.requests[r]
    return [(lk.i, lk.j) for lk in req.links]


def rows_cut1(b: SystemBuilder, vs: VarSpace, r: int, edge_on: Callable[[int], int]):
    """A linked VM pair is routed over e at most when e is on."""
    for (i, j) in _link_pairs(vs, r):
        for e, users in enumerate(vs.paths.on_path):
            if not users:
                continue
            terms = {vs.y[(r, i, j, k, p)]: 1.0 for (k, p) in users}
            terms[edge_on(e)] = -1.0
            b.add_row(f"CUT1[r={r},i={i},j={j},e={e}]", terms, "<=", 0.0, "CUT1")


def rows_cut2(b: SystemBuilder, vs: VarSpace, r: int, edge_on: Callable[[int], int]):
    """At most one link of r lands on the server pair {k, p}; if one does, every e on P_kp is on.

    Written once per unordered pair, summing both orientations.
    """
    links = _link_pairs(vs, r)
    if not links:
        return
    n_s = vs.inst.network.num_servers
    for k in range(n_s):
        for p in range(k + 1, n_s):
            cols: dict[int, float] = {}
            for (i, j) in links:
                cols[vs.y[(r, i, j, k, p)]] = 1.0
                cols[vs.y[(r, i, j, p, k)]] = 1.0
            for e in vs.paths.path(k, p):
                terms = dict(cols)
                terms[edge_on(e)] = -1.0
                b.add_row(f"CUT2[r={r},k={k},p={p},e={e}]", terms, "<=", 0.0, "CUT2")


def routed_traffic_terms(vs: VarSpace, r: int, e: int) -> dict[int, float]:
    req = vs.inst.requests[r]
    terms: dict[int, float] = {}
    for lk in req.links:
        for (k, p) in vs.paths.on_path[e]:
            col = vs.y[(r, lk.i, lk.j, k, p)]
            terms[col] = terms.get(col, 0.0) + lk.traffic
    return terms


def rows_qcl(b: SystemBuilder, vs: VarSpace, requests: Sequence[int],
             cap: Callable[[int], dict[int, float]], name: str = "QCL", tag: str = ""):
    """Routed traffic of ``requests`` on e bounded by ``cap(e)`` (a linear term map)."""
    for e in range(vs.inst.network.num_edges):
        terms: dict[int, float] = {}
        for r in requests:
            for col, a in routed_traffic_terms(vs, r, e).items():
                terms[col] = terms.get(col, 0.0) + a
        if not terms:
            continue
        for col, a in cap(e).items():
            terms[col] = terms.get(col, 0.0) - a
        b.add_row(f"{name}[{tag}e={e}]", terms, "<=", 0.0, "QCL" if name.startswith("QCL") else "DISAGG")


def rows_knapsack(b: SystemBuilder, vs: VarSpace, requests: Sequence[int],
                  cap: Callable[[int, str], dict[int, float]], prefix: str = "", tag: str = ""):
    """CPU and memory load of ``requests`` on k bounded by ``cap(k, kind)``."""
    inst = vs.inst
    for k in range(inst.network.num_servers):
        for kind, fam in (("cpu", "KP"), ("mem", "KPM")):
            terms: dict[int, float] = {}
            for r in requests:
                for i, vm in enumerate(inst.requests[r].vms):
                    terms[vs.x[(r, i, k)]] = vm.cpu if kind == "cpu" else vm.mem
            for col, a in cap(k, kind).items():
                terms[col] = terms.get(col, 0.0) - a
            if prefix:
                name = f"{prefix}{'CPU' if kind == 'cpu' else 'MEM'}[{tag}k={k}]"
                b.add_row(name, terms, "<=", 0.0, "DISAGG")
            else:
                b.add_row(f"{fam}[k={k}]", terms, "<=", 0.0, fam)


def rows_cut3(b: SystemBuilder, vs: VarSpace):
    rhs = vs.inst.max_request_size - 1
    if rhs > 0:
        b.add_row(CUT3, {j: 1.0 for j in vs.phi}, ">=", float(rhs), "CUT3")


def rows_request_connectivity(b: SystemBuilder, vs: VarSpace, r: int):
    """The servers used by one request induce a connected subgraph."""
    net = vs.inst.network
    size = vs.inst.requests[r].size
    terms = {vs.phi_r[(r, e)]: 1.0 for e in range(net.num_edges)}
    for k in range(net.num_servers):
        terms[vs.theta_r[(r, k)]] = -1.0
    b.add_row(f"CONNr[r={r}]", terms, ">=", -1.0, "CONNECTIVITY")
    if size >= 2:
        for k in range(net.num_servers):
            terms = {vs.phi_r[(r, e)]: -1.0 for e in net.incident_edges(k)}
            terms[vs.theta_r[(r, k)]] = 1.0
            b.add_row(f"CONNr[r={r},k={k}]", terms, "<=", 0.0, "CONNECTIVITY")


# -- builders ---------------------------------------------------------------------

def _base(inst: Instance, paths: PathTable, full_rlt: bool, lifted: bool = False):
    b = SystemBuilder()
    vs = VarSpace(inst, paths, full_rlt=full_rlt, lifted=lifted)
    for r in range(len(inst.requests)):
        add_request_vars(b, vs, r)
    add_network_vars(b, vs)
    return b, vs


def _aggregate_rows(b: SystemBuilder, vs: VarSpace):
    inst = vs.inst
    R = range(len(inst.requests))
    theta = vs.theta
    for r in R:
        rows_assignment(b, vs, r)
        rows_location(b, vs, r, lambda k: theta[k])
    rows_knapsack(b, vs, list(R), lambda k, kind: {
        theta[k]: inst.network.servers[k].cpu if kind == "cpu" else inst.network.servers[k].mem})
    rows_qcl(b, vs, list(R), lambda e: {vs.phi[e]: inst.network.edges[e].bandwidth})


def build_mc(inst: Instance, paths: PathTable, full_rlt: bool = False) -> ModelSystem:
    """Assignment/location/knapsack/linearized bandwidth rows plus McCormick envelopes."""
    b, vs = _base(inst, paths, full_rlt)
    _aggregate_rows(b, vs)
    for r in range(len(inst.requests)):
        rows_mccormick(b, vs, r)
    return b.build(meta=vs)


def _rlt_rows(b: SystemBuilder, vs: VarSpace, on: Callable[[int, int], int]):
    for r in range(len(vs.inst.requests)):
        rows_ac_rlt(b, vs, r)
        rows_loc_rlt(b, vs, r, lambda k, r=r: on(r, k))


def build_rlt(inst: Instance, paths: PathTable, full_rlt: bool = False) -> ModelSystem:
    """Like :func:`build_mc` with the envelopes replaced by the RLT assignment products."""
    b, vs = _base(inst, paths, full_rlt)
    _aggregate_rows(b, vs)
    _rlt_rows(b, vs, lambda r, k: vs.theta[k])
    return b.build(meta=vs)


def build_p1(inst: Instance, paths: PathTable, full_rlt: bool = False) -> ModelSystem:
    """The compact exact model: RLT rows plus the three structural cut families."""
    b, vs = _base(inst, paths, full_rlt)
    _aggregate_rows(b, vs)
    _rlt_rows(b, vs, lambda r, k: vs.theta[k])
    for r in range(len(inst.requests)):
        rows_cut1(b, vs, r, lambda e: vs.phi[e])
        rows_cut2(b, vs, r, lambda e: vs.phi[e])
    rows_cut3(b, vs)
    return b.build(meta=vs)


def request_block_rows(b: SystemBuilder, vs: VarSpace, r: int, location_sense: str = "<="):
    """Rows of the lifted model that involve request r alone."""
    net = vs.inst.network
    rows_assignment(b, vs, r)
    rows_location(b, vs, r, lambda k: vs.theta_r[(r, k)], location_sense)
    rows_ac_rlt(b, vs, r)
    rows_loc_rlt(b, vs, r, lambda k: vs.theta_r[(r, k)])
    rows_cut1(b, vs, r, lambda e: vs.phi_r[(r, e)])
    rows_cut2(b, vs, r, lambda e: vs.phi_r[(r, e)])
    rows_qcl(b, vs, [r], lambda e: {vs.phi_r[(r, e)]: net.edges[e].bandwidth},
             name="QCLr", tag=f"r={r},")


def build_p2(inst: Instance, paths: PathTable, full_rlt: bool = False) -> ModelSystem:
    """Lifted model: per-request reservations and copies of theta/phi.

    Every row is either local to one request or one of the coupling rows
    ``LAM[k] MU[k] SIG[e] ETA[r,k] ZETA[r,e] CUT3``, so that relaxing the
    latter separates the model by request, server and edge.
    """
    b, vs = _base(inst, paths, full_rlt, lifted=True)
    net = inst.network
    R = range(len(inst.requests))
    for r in R:
        add_lifted_vars(b, vs, r)
    for r in R:
        request_block_rows(b, vs, r)
        _reservation_rows(b, vs, [r], r)
    for k, s in enumerate(net.servers):
        b.add_row(f"{LAM}[k={k}]", {**{vs.w[(r, k)]: 1.0 for r in R}, vs.theta[k]: -s.cpu},
                  "<=", 0.0, "COUPLE")
        b.add_row(f"{MU}[k={k}]", {**{vs.z[(r, k)]: 1.0 for r in R}, vs.theta[k]: -s.mem},
                  "<=", 0.0, "COUPLE")
    for e, ed in enumerate(net.edges):
        b.add_row(f"{SIG}[e={e}]", {**{vs.kappa[(r, e)]: 1.0 for r in R}, vs.phi[e]: -ed.bandwidth},
                  "<=", 0.0, "COUPLE")
    for r in R:
        for k in range(net.num_servers):
            b.add_row(f"{ETA}[r={r},k={k}]", {vs.theta_r[(r, k)]: 1.0, vs.theta[k]: -1.0},
                      "<=", 0.0, "COUPLE")
        for e in range(net.num_edges):
            b.add_row(f"{ZETA}[r={r},e={e}]", {vs.phi_r[(r, e)]: 1.0, vs.phi[e]: -1.0},
                      "<=", 0.0, "COUPLE")
    rows_cut3(b, vs)
    return b.build(meta=vs)


def _reservation_rows(b: SystemBuilder, vs: VarSpace, requests: Sequence[int], owner: int,
                      w=None, z=None, kappa=None):
    """Load of ``requests`` <= reservation columns, reservations <= capacity x usage."""
    net = vs.inst.network
    w = w or (lambda k: vs.w[(owner, k)])
    z = z or (lambda k: vs.z[(owner, k)])
    kappa = kappa or (lambda e: vs.kappa[(owner, e)])
    tag = f"r={owner},"
    rows_knapsack(b, vs, requests,
                  lambda k, kind: {w(k) if kind == "cpu" else z(k): 1.0}, prefix="RES", tag=tag)
    rows_qcl(b, vs, requests, lambda e: {kappa(e): 1.0}, name="RESBW", tag=tag)
    for k, s in enumerate(net.servers):
        on = {vs.theta_r[(r, k)]: -s.cpu for r in requests}
        b.add_row(f"WCAP[r={owner},k={k}]", {w(k): 1.0, **on}, "<=", 0.0, "RESERVE")
        on = {vs.theta_r[(r, k)]: -s.mem for r in requests}
        b.add_row(f"ZCAP[r={owner},k={k}]", {z(k): 1.0, **on}, "<=", 0.0, "RESERVE")
    for e, ed in enumerate(net.edges):
        on = {vs.phi_r[(r, e)]: -ed.bandwidth for r in requests}
        b.add_row(f"KCAP[r={owner},e={e}]", {kappa(e): 1.0, **on}, "<=", 0.0, "RESERVE")


# -- dynamic rows -------------------------------------------------------------------

def emit_connectivity_cuts(vs: VarSpace) -> list[Row]:
    """Rows valid once the used servers are known to form a connected subgraph.

    The per-server row needs at least two VMs somewhere (a single used server
    has no incident edge to switch on), so it is only emitted in that case.
    """
    net = vs.inst.network
    terms = {j: 1.0 for j in vs.phi}
    for j in vs.theta:
        terms[j] = terms.get(j, 0.0) - 1.0
    rows = [Row.make("CONN", terms, ">=", -1.0, "CONNECTIVITY")]
    if vs.inst.max_request_size >= 2:
        for k in range(net.num_servers):
            t = {vs.phi[e]: -1.0 for e in net.incident_edges(k)}
            t[vs.theta[k]] = 1.0
            rows.append(Row.make(f"CONN[k={k}]", t, "<=", 0.0, "CONNECTIVITY"))
    return rows


def emit_local_branching_row(vs: VarSpace, incumbent: MappingSolution, radius: float) -> Row:
    """d(v, incumbent) <= radius, counting only columns that are 1 in the incumbent."""
    ones = [vs.theta[k] for k, on in enumerate(incumbent.server_on) if on]
    ones += [vs.phi[e] for e, on in enumerate(incumbent.edge_on) if on]
    for r, row in enumerate(incumbent.assign):
        ones += [vs.x[(r, i, k)] for i, k in enumerate(row)]
    # sum_{ones} (1 - v) <= radius  <=>  -sum v <= radius - |ones|
    return Row.make("LOCAL_BRANCH", {j: -1.0 for j in ones}, "<=",
                    float(radius) - len(ones), "LOCAL_BRANCH")


def local_branch_distance(incumbent: MappingSolution, other: MappingSolution) -> int:
    d = sum(1 for a, b in zip(incumbent.server_on, other.server_on) if a and not b)
    d += sum(1 for a, b in zip(incumbent.edge_on, other.edge_on) if a and not b)
    for ra, rb in zip(incumbent.assign, other.assign):
        d += sum(1 for ka, kb in zip(ra, rb) if ka != kb)
    return d


def objective_cap_row(sys: ModelSystem, ub: float) -> Row:
    nz = np.flatnonzero(sys.obj)
    return Row.make("OBJCAP", {int(j): float(sys.obj[j]) for j in nz}, "<=",
                    ub - sys.obj_offset, "BOUND")


class CutPool:
    """Rows keyed by their sparse pattern and rhs; duplicates are dropped."""

    def __init__(self, rows: Iterable[Row] = ()):
        self._rows: list[Row] = []
        self._keys: set = set()
        self.extend(rows)

    def add(self, row: Row) -> bool:
        key = row.key()
        if key in self._keys:
            return False
        self._keys.add(key)
        self._rows.append(row)
        return True

    def extend(self, rows: Iterable[Row]) -> int:
        return sum(self.add(r) for r in rows)

    def by_family(self, family: str) -> list[Row]:
        return [r for r in self._rows if r.family == family]

    def __iter__(self):
        return iter(self._rows)

    def __len__(self):
        return len(self._rows)


def solution_point(sys: ModelSystem, sol: MappingSolution) -> np.ndarray:
    """Lift a mapping to a full 0/1 point of a built system (lifted columns included)."""
    vs: VarSpace = sys.meta
    v = vs.point_of(sol, sys.num_vars)
    if vs.lifted:
        inst, paths = vs.inst, vs.paths
        for r, row in enumerate(sol.assign):
            req = inst.requests[r]
            for i, k in enumerate(row):
                v[vs.w[(r, k)]] += req.vms[i].cpu
                v[vs.z[(r, k)]] += req.vms[i].mem
                v[vs.theta_r[(r, k)]] = 1.0
            for lk in req.links:
                k, p = row[lk.i], row[lk.j]
                if k != p:
                    for e in paths.path(k, p):
                        v[vs.kappa[(r, e)]] += lk.traffic
                        v[vs.phi_r[(r, e)]] = 1.0
    return v


def greedy_placement(inst: Instance, weights: dict[tuple[int, int, int], float],
                     allowed: Callable[[int], bool] | None = None):
    """Place VMs in decreasing order of ``weights[(r, i, k)]``.

    Respects one VM per server per request and CPU/memory capacities; returns
    ``None`` when some VM cannot be placed.
    """
    net = inst.network
    cpu = [s.cpu for s in net.servers]
    mem = [s.mem for s in net.servers]
    assign = [[-1] * req.size for req in inst.requests]
    taken = [set() for _ in inst.requests]
    order = sorted(weights, key=lambda key: (-weights[key], key))
    for (r, i, k) in order:
        if assign[r][i] >= 0 or k in taken[r]:
            continue
        if allowed is not None and not allowed(k):
            continue
        vm = inst.requests[r].vms[i]
        if vm.cpu <= cpu[k] and vm.mem <= mem[k]:
            assign[r][i] = k
            taken[r].add(k)
            cpu[k] -= vm.cpu
            mem[k] -= vm.mem
    if any(k < 0 for row in assign for k in row):
        return None
    return tuple(tuple(row) for row in assign)


def rounding_heuristic(sys: ModelSystem) -> Callable[[np.ndarray], np.ndarray | None]:
    """Node heuristic for :func:`vmmap.mip.solve_mip` on any mapping model."""
    from .core import validate_solution

    vs: VarSpace = sys.meta

    def run(x: np.ndarray):
        weights = {key: float(x[j]) for key, j in vs.x.items()}
        # servers switched off at this node stay off
        allowed = lambda k: sys.upper[vs.theta[k]] > 0.5 and x[vs.theta[k]] > 1e-6
        assign = greedy_placement(vs.inst, weights, allowed)
        if assign is None:
            assign = greedy_placement(vs.inst, weights)
        if assign is None:
            return None
        sol = MappingSolution.from_assignment(vs.inst, vs.paths, assign)
        if not validate_solution(vs.inst, vs.paths, sol).ok:
            return None
        return solution_point(sys, sol)

    return run


def mapping_priority(sys: ModelSystem) -> np.ndarray:
    """Branch on theta/phi before x."""
    vs: VarSpace = sys.meta
    pr = np.zeros(sys.num_vars)
    pr[vs.theta] = 2
    pr[vs.phi] = 2
    pr[list(vs.x.values())] = 1
    return pr
