"""Problem data and solution types shared by every solver in the package."""

from __future__ import annotations

import numbers
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:
    from .paths import PathTable

ABS_TOL = 1e-6
REL_TOL = 1e-9


class ModelError(ValueError):
    """Raised when problem data violates a structural invariant."""


class DisconnectedNetwork(ModelError):
    pass


class IndexOutOfRange(ModelError):
    pass


def costs_close(a: float, b: float) -> bool:
    """Cost equality under the package-wide absolute/relative tolerance."""
    return abs(a - b) <= max(ABS_TOL, REL_TOL * max(abs(a), abs(b)))


def _is_connected(n: int, adjacency: dict[int, set[int]]) -> bool:
    if n <= 1:
        return True
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == n


@dataclass(frozen=True)
class Server:
    id: int
    cpu: float
    mem: float
    fixed_cost: float
    cpu_cost: float


@dataclass(frozen=True)
class Edge:
    id: int
    u: int
    v: int
    bandwidth: float
    fixed_cost: float

    @property
    def endpoints(self) -> tuple[int, int]:
        return (self.u, self.v)


@dataclass(frozen=True)
class PhysicalNetwork:
    servers: tuple[Server, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        object.__setattr__(self, "servers", tuple(self.servers))
        object.__setattr__(self, "edges", tuple(self.edges))
        n = len(self.servers)
        if n == 0:
            raise ModelError("network has no servers")
        for pos, s in enumerate(self.servers):
            if s.id != pos:
                raise ModelError(f"server ids must be dense and 0-based, got {s.id} at {pos}")
            if s.cpu < 1 or s.mem < 1:
                raise ModelError(f"server {s.id}: capacities must be >= 1")
            if s.fixed_cost < 0 or s.cpu_cost < 0:
                raise ModelError(f"server {s.id}: costs must be >= 0")
        seen_pairs = set()
        adjacency: dict[int, set[int]] = {k: set() for k in range(n)}
        for pos, e in enumerate(self.edges):
            if e.id != pos:
                raise ModelError(f"edge ids must be dense and 0-based, got {e.id} at {pos}")
            if e.u == e.v:
                raise ModelError(f"edge {e.id} is a self-loop")
            if not (0 <= e.u < n and 0 <= e.v < n):
                raise ModelError(f"edge {e.id} references unknown server")
            pair = frozenset((e.u, e.v))
            if pair in seen_pairs:
                raise ModelError(f"duplicate edge between {e.u} and {e.v}")
            if e.bandwidth < 0 or e.fixed_cost < 0:
                raise ModelError(f"edge {e.id}: bandwidth and cost must be >= 0")
            seen_pairs.add(pair)
            adjacency[e.u].add(e.v)
            adjacency[e.v].add(e.u)
        if not _is_connected(n, adjacency):
            raise DisconnectedNetwork("physical network is not connected")

    @property
    def num_servers(self) -> int:
        return len(self.servers)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def incident_edges(self, k: int) -> list[int]:
        return [e.id for e in self.edges if k in (e.u, e.v)]


@dataclass(frozen=True)
class VirtualMachine:
    cpu: float
    mem: float


@dataclass(frozen=True)
class VirtualLink:
    i: int
    j: int
    traffic: float


@dataclass(frozen=True)
class VirtualRequest:
    id: int
    vms: tuple[VirtualMachine, ...]
    links: tuple[VirtualLink, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "vms", tuple(self.vms))
        object.__setattr__(self, "links", tuple(self.links))
        n = len(self.vms)
        if n < 1:
            raise ModelError(f"request {self.id} has no VMs")
        for vm in self.vms:
            if vm.cpu < 1 or vm.mem < 1:
                raise ModelError(f"request {self.id}: VM demands must be >= 1")
        adjacency: dict[int, set[int]] = {i: set() for i in range(n)}
        pairs = set()
        for link in self.links:
            if not (0 <= link.i < link.j < n):
                raise ModelError(f"request {self.id}: link ({link.i},{link.j}) needs 0 <= i < j < |V|")
            if link.traffic <= 0:
                raise ModelError(f"request {self.id}: link traffic must be > 0")
            if (link.i, link.j) in pairs:
                raise ModelError(f"request {self.id}: duplicate link ({link.i},{link.j})")
            pairs.add((link.i, link.j))
            adjacency[link.i].add(link.j)
            adjacency[link.j].add(link.i)
        if not _is_connected(n, adjacency):
            raise ModelError(f"request {self.id}: request graph is not connected")

    @property
    def size(self) -> int:
        return len(self.vms)

    def traffic(self, i: int, j: int) -> float:
        a, b = min(i, j), max(i, j)
        for link in self.links:
            if link.i == a and link.j == b:
                return link.traffic
        return 0.0


@dataclass(frozen=True)
class Instance:
    network: PhysicalNetwork
    requests: tuple[VirtualRequest, ...]
    name: str = "instance"

    def __post_init__(self):
        object.__setattr__(self, "requests", tuple(self.requests))
        if not self.requests:
            raise ModelError("instance needs at least one request")
        for pos, r in enumerate(self.requests):
            if r.id != pos:
                raise ModelError(f"request ids must be dense and 0-based, got {r.id} at {pos}")

    @property
    def num_vms(self) -> int:
        return sum(r.size for r in self.requests)

    @property
    def max_request_size(self) -> int:
        return max(r.size for r in self.requests)


@dataclass(frozen=True)
class CostBreakdown:
    server_fixed: float = 0.0
    cpu_load: float = 0.0
    edge_fixed: float = 0.0

    @property
    def total(self) -> float:
        return self.server_fixed + self.cpu_load + self.edge_fixed


@dataclass(frozen=True)
class MappingSolution:
    """A complete mapping: ``assign[r][i]`` is the server hosting VM ``i`` of request ``r``."""

    assign: tuple[tuple[int, ...], ...]
    server_on: tuple[bool, ...]
    edge_on: tuple[bool, ...]
    objective: float
    breakdown: CostBreakdown = field(default_factory=CostBreakdown)

    @classmethod
    def from_assignment(cls, inst: Instance, paths: "PathTable",
                        assign: Sequence[Sequence[int]]) -> "MappingSolution":
        """Build the cheapest solution for a fixed VM placement.

        Servers hosting a VM and edges carrying routed traffic are switched on;
        everything else stays off.
        """
        assign = tuple(tuple(int(k) for k in row) for row in assign)
        n_s = inst.network.num_servers
        server_on = [False] * n_s
        for row in assign:
            for k in row:
                if not 0 <= k < n_s:
                    raise IndexOutOfRange(f"server index {k} out of range")
                server_on[k] = True
        loads = edge_loads(inst, paths, assign)
        edge_on = tuple(load > 0 for load in loads)
        probe = cls(assign, tuple(server_on), edge_on, 0.0)
        breakdown = cost_breakdown(inst, probe)
        return cls(assign, tuple(server_on), edge_on, breakdown.total, breakdown)


def edge_loads(inst: Instance, paths: "PathTable",
               assign: Sequence[Sequence[int]]) -> list[float]:
    """Traffic routed over each physical edge by a placement."""
    loads = [0.0] * inst.network.num_edges
    for r, req in enumerate(inst.requests):
        for link in req.links:
            k, p = assign[r][link.i], assign[r][link.j]
            if k == p:
                continue
            for e in paths.path(k, p):
                loads[e] += link.traffic
    return loads


def cost_breakdown(inst: Instance, sol: MappingSolution) -> CostBreakdown:
    net = inst.network
    server_fixed = sum(s.fixed_cost for s, on in zip(net.servers, sol.server_on) if on)
    cpu_load = 0.0
    for r, req in enumerate(inst.requests):
        for i, vm in enumerate(req.vms):
            cpu_load += net.servers[sol.assign[r][i]].cpu_cost * vm.cpu
    edge_fixed = sum(e.fixed_cost for e, on in zip(net.edges, sol.edge_on) if on)
    return CostBreakdown(server_fixed, cpu_load, edge_fixed)


def objective_of(inst: Instance, sol: MappingSolution) -> float:
    """Server fixed costs + CPU-load costs + edge fixed costs."""
    return cost_breakdown(inst, sol).total


@dataclass
class ValidationReport:
    families: dict[str, bool]
    first_violation: str | None = None
    objective: float = 0.0

    @property
    def ok(self) -> bool:
        return all(self.families.values())

    def __bool__(self) -> bool:
        return self.ok


FAMILIES = ("AC", "LC", "KP", "KPM", "QC", "ON", "OBJ")


def validate_solution(inst: Instance, paths: "PathTable",
                      sol: MappingSolution) -> ValidationReport:
    """Check a solution against every constraint family of the mapping model.

    Families are reported in a fixed order; ``first_violation`` names the first
    failing constraint, e.g. ``"KP[k=3]"``.
    """
    net = inst.network
    n_s, n_e = net.num_servers, net.num_edges
    if len(sol.server_on) != n_s or len(sol.edge_on) != n_e:
        raise IndexOutOfRange("server_on/edge_on length does not match the network")
    for row in sol.assign:
        for k in row:
            if not isinstance(k, numbers.Integral) or not 0 <= k < n_s:
                raise IndexOutOfRange(f"server index {k!r} out of range")

    result = {f: True for f in FAMILIES}
    violations: list[str] = []

    def fail(family: str, where: str):
        if result[family]:
            result[family] = False
            violations.append(where)

    if len(sol.assign) != len(inst.requests):
        fail("AC", "AC[requests]")
    for r, req in enumerate(inst.requests):
        if r >= len(sol.assign) or len(sol.assign[r]) != req.size:
            fail("AC", f"AC[r={r}]")

    if result["AC"]:
        for r, row in enumerate(sol.assign):
            seen: dict[int, int] = {}
            for i, k in enumerate(row):
                if k in seen:
                    fail("LC", f"LC[r={r},k={k}]")
                seen[k] = i
                if not sol.server_on[k]:
                    fail("ON", f"ON[k={k}]")

        cpu = [0.0] * n_s
        mem = [0.0] * n_s
        for r, req in enumerate(inst.requests):
            for i, vm in enumerate(req.vms):
                k = sol.assign[r][i]
                cpu[k] += vm.cpu
                mem[k] += vm.mem
        for k, s in enumerate(net.servers):
            if cpu[k] > s.cpu * sol.server_on[k] + ABS_TOL:
                fail("KP", f"KP[k={k}]")
            if mem[k] > s.mem * sol.server_on[k] + ABS_TOL:
                fail("KPM", f"KPM[k={k}]")

        loads = edge_loads(inst, paths, sol.assign)
        for e, edge in enumerate(net.edges):
            if loads[e] > edge.bandwidth * sol.edge_on[e] + ABS_TOL:
                fail("QC", f"QC[e={e}]")

        recomputed = objective_of(inst, sol)
        if not costs_close(recomputed, sol.objective):
            fail("OBJ", "OBJ")
    else:
        recomputed = float("nan")
        fail("OBJ", "OBJ")

    order = {f: n for n, f in enumerate(FAMILIES)}
    first = None
    if violations:
        first = min(violations, key=lambda v: order[v.split("[")[0]])
    return ValidationReport(result, first, recomputed)
