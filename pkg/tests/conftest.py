import functools

import pytest

from vmmap.core import (Edge, Instance, PhysicalNetwork, Server, VirtualLink, VirtualMachine,
                        VirtualRequest)
from vmmap.io import GeneratorConfig, generate_instance, load_fixture, parse_network
from vmmap.paths import build_path_table

# five servers: a ring 0-1-2-3-4 plus the chord 0-2
TINY_NET = """\
servers 5 edges 6
server 0 cpu 16 mem 256 fcost 120 acost 10
server 1 cpu 8 mem 128 fcost 60 acost 10
server 2 cpu 32 mem 512 fcost 200 acost 10
server 3 cpu 8 mem 128 fcost 90 acost 10
server 4 cpu 16 mem 256 fcost 75 acost 10
edge 0 0 1 bw 300 wcost 40
edge 1 1 2 bw 150 wcost 30
edge 2 2 3 bw 300 wcost 50
edge 3 3 4 bw 150 wcost 20
edge 4 4 0 bw 300 wcost 60
edge 5 0 2 bw 150 wcost 35
"""


@functools.lru_cache(maxsize=None)
def tiny_network() -> PhysicalNetwork:
    return parse_network(TINY_NET)


@functools.lru_cache(maxsize=None)
def generated(topology: str, num_requests: int, seed: int, vms: int = 5) -> Instance:
    skeleton = tiny_network() if topology == "tiny" else load_fixture(topology)
    cfg = GeneratorConfig(num_requests=num_requests, vms_per_request=vms, rng_seed=seed)
    return generate_instance(skeleton, cfg)


@functools.lru_cache(maxsize=None)
def paths_for(inst: Instance):
    return build_path_table(inst.network)


def network(servers, edges) -> PhysicalNetwork:
    """servers: (cpu, mem, F, A) tuples; edges: (u, v, B, W) tuples."""
    return PhysicalNetwork(tuple(Server(k, *s) for k, s in enumerate(servers)),
                           tuple(Edge(e, *d) for e, d in enumerate(edges)))


def request(rid, vms, links=()) -> VirtualRequest:
    return VirtualRequest(rid, tuple(VirtualMachine(c, m) for c, m in vms),
                          tuple(VirtualLink(i, j, f) for i, j, f in links))


@pytest.fixture
def tiny():
    return tiny_network()
