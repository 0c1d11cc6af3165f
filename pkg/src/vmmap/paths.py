"""Fixed shortest-path routing between every ordered server pair."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable

from .core import DisconnectedNetwork, Edge, PhysicalNetwork

EdgeWeightRule = Callable[[Edge], float]


def hop_weight(edge: Edge) -> float:
    return 1.0


def inverse_bandwidth_weight(edge: Edge) -> float:
    return 1.0 / edge.bandwidth if edge.bandwidth > 0 else float("inf")


WEIGHT_RULES = {"hop": hop_weight, "inv-bandwidth": inverse_bandwidth_weight}


@dataclass(frozen=True)
class PathTable:
    """``path(k, p)`` lists edge ids from k to p; ``on_path[e]`` lists every (k, p) routed over e."""

    num_servers: int
    nodes: dict[tuple[int, int], tuple[int, ...]]
    edges: dict[tuple[int, int], tuple[int, ...]]
    on_path: tuple[tuple[tuple[int, int], ...], ...]
    weights: tuple[float, ...]

    def path(self, k: int, p: int) -> tuple[int, ...]:
        if k == p:
            raise KeyError("no path is stored for k == p")
        return self.edges[(k, p)]

    def node_sequence(self, k: int, p: int) -> tuple[int, ...]:
        return self.nodes[(k, p)]

    def weight(self, k: int, p: int) -> float:
        return sum(self.weights[e] for e in self.path(k, p))

    def pairs(self):
        """Ordered pairs (k, p) with k != p, in lexicographic order."""
        return sorted(self.edges)


def _dijkstra(net: PhysicalNetwork, source: int, weights: list[float]):
    adjacency: dict[int, list[tuple[int, int]]] = {k: [] for k in range(net.num_servers)}
    for e in net.edges:
        adjacency[e.u].append((e.v, e.id))
        adjacency[e.v].append((e.u, e.id))
    # (distance, node sequence) keys give the lexicographically smallest
    # sequence among all minimum-weight paths
    best: dict[int, tuple[float, tuple[int, ...], tuple[int, ...]]] = {}
    heap = [(0.0, (source,), ())]
    while heap:
        dist, seq, epath = heapq.heappop(heap)
        u = seq[-1]
        if u in best:
            continue
        best[u] = (dist, seq, epath)
        for v, eid in adjacency[u]:
            if v not in best:
                heapq.heappush(heap, (dist + weights[eid], seq + (v,), epath + (eid,)))
    return best


def build_path_table(net: PhysicalNetwork, weight: EdgeWeightRule | str = hop_weight) -> PathTable:
    """Route every ordered server pair on a minimum-weight path.

    Paths are computed for k < p and reused reversed for p -> k, so both
    directions traverse the same edges.
    """
    if isinstance(weight, str):
        weight = WEIGHT_RULES[weight]
    weights = [float(weight(e)) for e in net.edges]
    n = net.num_servers
    nodes: dict[tuple[int, int], tuple[int, ...]] = {}
    edges: dict[tuple[int, int], tuple[int, ...]] = {}
    for k in range(n):
        best = _dijkstra(net, k, weights)
        for p in range(k + 1, n):
            if p not in best or best[p][0] == float("inf"):
                raise DisconnectedNetwork(f"no path between servers {k} and {p}")
            _, seq, epath = best[p]
            nodes[(k, p)] = seq
            edges[(k, p)] = epath
            nodes[(p, k)] = tuple(reversed(seq))
            edges[(p, k)] = tuple(reversed(epath))
    on_path: list[list[tuple[int, int]]] = [[] for _ in net.edges]
    for pair in sorted(edges):
        for e in edges[pair]:
            on_path[e].append(pair)
    return PathTable(n, nodes, edges, tuple(tuple(x) for x in on_path), tuple(weights))
