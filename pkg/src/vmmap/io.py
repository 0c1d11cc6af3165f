"""Network/instance file formats and the random instance generator.

NETWORK format (line oriented, ``#`` starts a comment)::

    servers N edges M
    server <id> cpu <C> mem <M> fcost <F> acost <A>     (N lines)
    edge <id> <k> <p> bw <B> wcost <W>                  (M lines)

Instances are JSON documents carrying ``schema_version``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .core import (DisconnectedNetwork, Edge, Instance, ModelError,
                   PhysicalNetwork, Server, VirtualLink, VirtualMachine,
                   VirtualRequest)

SCHEMA_VERSION = 1

DEFAULT_PROFILES = ((8, 128), (16, 256), (32, 512), (64, 1024))


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SchemaVersionMismatch(ParseError):
    pass


class InvalidConfig(ValueError):
    pass


class DisconnectedRequestAfterRetries(RuntimeError):
    pass


def _number(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"expected a number, got {token!r}", lineno) from None


def _integer(token: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected an integer, got {token!r}", lineno) from None


def parse_network(text: str) -> PhysicalNetwork:
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].split()
        if content:
            lines.append((lineno, content))
    if not lines:
        raise ParseError("empty network file")

    lineno, head = lines[0]
    if len(head) != 4 or head[0] != "servers" or head[2] != "edges":
        raise ParseError("header must read 'servers N edges M'", lineno)
    n, m = _integer(head[1], lineno), _integer(head[3], lineno)
    body = lines[1:]
    if len(body) != n + m:
        raise ParseError(f"expected {n} server and {m} edge lines, found {len(body)}",
                         body[-1][0] if body else lineno)

    servers = []
    for lineno, tok in body[:n]:
        if len(tok) != 10 or tok[0] != "server" or tok[2::2] != ["cpu", "mem", "fcost", "acost"]:
            raise ParseError("expected 'server <id> cpu <C> mem <M> fcost <F> acost <A>'", lineno)
        sid = _integer(tok[1], lineno)
        if sid != len(servers):
            raise ParseError(f"server ids must be dense, expected {len(servers)}", lineno)
        servers.append(Server(sid, _number(tok[3], lineno), _number(tok[5], lineno),
                              _number(tok[7], lineno), _number(tok[9], lineno)))

    edges = []
    pairs: dict[frozenset, int] = {}
    for lineno, tok in body[n:]:
        if len(tok) != 8 or tok[0] != "edge" or tok[4] != "bw" or tok[6] != "wcost":
            raise ParseError("expected 'edge <id> <k> <p> bw <B> wcost <W>'", lineno)
        eid = _integer(tok[1], lineno)
        if eid != len(edges):
            raise ParseError(f"edge ids must be dense, expected {len(edges)}", lineno)
        k, p = _integer(tok[2], lineno), _integer(tok[3], lineno)
        if k == p:
            raise ParseError(f"self-loop on server {k}", lineno)
        if not (0 <= k < n and 0 <= p < n):
            raise ParseError("edge endpoint out of range", lineno)
        key = frozenset((k, p))
        if key in pairs:
            raise ParseError(f"duplicate edge ({k},{p})", lineno)
        pairs[key] = eid
        edges.append(Edge(eid, k, p, _number(tok[5], lineno), _number(tok[7], lineno)))

    try:
        return PhysicalNetwork(tuple(servers), tuple(edges))
    except DisconnectedNetwork:
        raise
    except ModelError as exc:
        raise ParseError(str(exc)) from exc


def _fmt(value: float) -> str:
    return repr(float(value)) if value != int(value) else str(int(value))


def format_network(net: PhysicalNetwork) -> str:
    out = [f"servers {net.num_servers} edges {net.num_edges}"]
    for s in net.servers:
        out.append(f"server {s.id} cpu {_fmt(s.cpu)} mem {_fmt(s.mem)} "
                   f"fcost {_fmt(s.fixed_cost)} acost {_fmt(s.cpu_cost)}")
    for e in net.edges:
        out.append(f"edge {e.id} {e.u} {e.v} bw {_fmt(e.bandwidth)} wcost {_fmt(e.fixed_cost)}")
    return "\n".join(out) + "\n"


FIXTURES = {
    "small-8-10": "small_8_10.net",
    "abilene-12-15": "abilene_12_15.net",
    "mesh-15-22": "mesh_15_22.net",
    "mesh-22-36": "mesh_22_36.net",
}


def load_fixture(name: str) -> PhysicalNetwork:
    """Load one of the bundled topologies (see ``FIXTURES``)."""
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}")
    text = resources.files("vmmap").joinpath("data", FIXTURES[name]).read_text()
    return parse_network(text)


def fixture_for_shape(num_servers: int, num_edges: int) -> str:
    for name in FIXTURES:
        net = load_fixture(name)
        if (net.num_servers, net.num_edges) == (num_servers, num_edges):
            return name
    raise KeyError(f"no bundled topology with {num_servers} servers and {num_edges} edges")


# -- instance documents ------------------------------------------------------

def instance_to_dict(inst: Instance) -> dict:
    net = inst.network
    return {
        "schema_version": SCHEMA_VERSION,
        "name": inst.name,
        "network": {
            "servers": [[s.cpu, s.mem, s.fixed_cost, s.cpu_cost] for s in net.servers],
            "edges": [[e.u, e.v, e.bandwidth, e.fixed_cost] for e in net.edges],
        },
        "requests": [
            {
                "vms": [[vm.cpu, vm.mem] for vm in req.vms],
                "links": [[lk.i, lk.j, lk.traffic] for lk in req.links],
            }
            for req in inst.requests
        ],
    }


def write_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1, sort_keys=True) + "\n"


def _require(doc: dict, key: str, where: str):
    if not isinstance(doc, dict) or key not in doc:
        raise ParseError(f"missing {key!r} section in {where}")
    return doc[key]


def instance_from_dict(doc: dict, network: PhysicalNetwork | None = None) -> Instance:
    version = _require(doc, "schema_version", "instance")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"schema_version {version} != {SCHEMA_VERSION}")
    try:
        if network is None:
            net_doc = _require(doc, "network", "instance")
            if isinstance(net_doc, str):
                network = load_fixture(net_doc)
            else:
                servers = tuple(Server(k, float(c), float(m), float(f), float(a))
                                for k, (c, m, f, a) in enumerate(_require(net_doc, "servers", "network")))
                edges = tuple(Edge(e, int(u), int(v), float(b), float(w))
                              for e, (u, v, b, w) in enumerate(_require(net_doc, "edges", "network")))
                network = PhysicalNetwork(servers, edges)
        requests = []
        for r, req in enumerate(_require(doc, "requests", "instance")):
            vms = tuple(VirtualMachine(float(c), float(m)) for c, m in _require(req, "vms", f"request {r}"))
            links = tuple(VirtualLink(int(i), int(j), float(f))
                          for i, j, f in req.get("links", []))
            requests.append(VirtualRequest(r, vms, links))
        return Instance(network, tuple(requests), str(doc.get("name", "instance")))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc)) from exc


def read_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from exc
    return instance_from_dict(doc)


# -- generator ----------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    num_requests: int = 1
    vms_per_request: int = 5
    traffic_range: tuple[int, int] = (0, 100)
    cpu_range: tuple[int, int] = (1, 10)
    mem_range: tuple[int, int] = (2, 8)
    server_profiles: tuple[tuple[int, int], ...] = field(default=DEFAULT_PROFILES)
    cpu_load_cost: float = 10.0
    rng_seed: int = 0
    max_redraws: int = 1000

    def validate(self):
        if self.num_requests < 1:
            raise InvalidConfig("num_requests must be >= 1")
        if self.vms_per_request < 1:
            raise InvalidConfig("vms_per_request must be >= 1")
        for label, (lo, hi) in (("traffic_range", self.traffic_range),
                                ("cpu_range", self.cpu_range),
                                ("mem_range", self.mem_range)):
            if lo > hi:
                raise InvalidConfig(f"{label} is empty: [{lo}, {hi}]")
        if self.traffic_range[0] < 0:
            raise InvalidConfig("traffic must be nonnegative")
        if self.cpu_range[0] < 1 or self.mem_range[0] < 1:
            raise InvalidConfig("VM demands must be >= 1")
        if not self.server_profiles:
            raise InvalidConfig("server_profiles is empty")
        if self.cpu_load_cost < 0:
            raise InvalidConfig("cpu_load_cost must be >= 0")


def _draw_request(rid: int, cfg: GeneratorConfig, rng: np.random.Generator) -> VirtualRequest:
    n = cfg.vms_per_request
    for _ in range(cfg.max_redraws):
        cpus = rng.integers(cfg.cpu_range[0], cfg.cpu_range[1] + 1, size=n)
        mems = rng.integers(cfg.mem_range[0], cfg.mem_range[1] + 1, size=n)
        links = []
        for i in range(n):
            for j in range(i + 1, n):
                f = int(rng.integers(cfg.traffic_range[0], cfg.traffic_range[1] + 1))
                if f > 0:
                    links.append(VirtualLink(i, j, float(f)))
        vms = tuple(VirtualMachine(float(c), float(m)) for c, m in zip(cpus, mems))
        try:
            return VirtualRequest(rid, vms, tuple(links))
        except ModelError:
            continue
    raise DisconnectedRequestAfterRetries(
        f"request {rid}: no connected request graph after {cfg.max_redraws} draws")


def generate_instance(skeleton: PhysicalNetwork, cfg: GeneratorConfig,
                      name: str | None = None) -> Instance:
    """Draw random requests and server capacities on a fixed topology.

    Edge data and server fixed costs come from ``skeleton``; CPU/memory come
    from ``cfg.server_profiles`` and the CPU-load cost from ``cfg``.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.rng_seed)
    picks = rng.integers(0, len(cfg.server_profiles), size=skeleton.num_servers)
    servers = tuple(
        Server(s.id, float(cfg.server_profiles[p][0]), float(cfg.server_profiles[p][1]),
               s.fixed_cost, float(cfg.cpu_load_cost))
        for s, p in zip(skeleton.servers, picks))
    network = PhysicalNetwork(servers, skeleton.edges)
    requests = tuple(_draw_request(r, cfg, rng) for r in range(cfg.num_requests))
    if name is None:
        name = (f"S{network.num_servers}E{network.num_edges}-"
                f"R{cfg.num_requests}x{cfg.vms_per_request}-seed{cfg.rng_seed}")
    return Instance(network, requests, name)
