"""Exhaustive ground truth for small instances.

Depth-first enumeration of VM placements (one VM per server per request,
CPU/memory capacities checked as VMs are placed, edge bandwidth checked as
virtual links are completed).  A branch is cut when its partial cost plus
the cheapest possible CPU cost of the unplaced VMs reaches the incumbent;
partial costs only grow, so the result is exact.
"""

from __future__ import annotations

import math

from .core import Instance, MappingSolution, ModelError, validate_solution
from .paths import PathTable

DEFAULT_GUARD = 10 ** 8


class SearchSpaceTooLarge(ModelError):
    pass


class Infeasible(ModelError):
    pass


def search_space(inst: Instance) -> int:
    """Injective VM-to-server placements per request, multiplied over requests."""
    n_s = inst.network.num_servers
    total = 1
    for req in inst.requests:
        if req.size > n_s:
            return 0
        total *= math.perm(n_s, req.size)
    return total


def _vm_order(inst: Instance) -> list[tuple[int, int]]:
    # breadth-first per request so every placed VM closes links early
    order = []
    for r, req in enumerate(inst.requests):
        adj = {i: [] for i in range(req.size)}
        for lk in req.links:
            adj[lk.i].append(lk.j)
            adj[lk.j].append(lk.i)
        seen, queue = {0}, [0]
        while queue:
            i = queue.pop(0)
            order.append((r, i))
            for j in sorted(adj[i]):
                if j not in seen:
                    seen.add(j)
                    queue.append(j)
    return order


def oracle_solve(inst: Instance, paths: PathTable, guard: int = DEFAULT_GUARD) -> MappingSolution:
    """Cheapest feasible mapping by exhaustive search (raises Infeasible if none)."""
    space = search_space(inst)
    if space > guard:
        raise SearchSpaceTooLarge(f"{space} placements exceed the guard of {guard}")
    net = inst.network
    S = net.num_servers
    order = _vm_order(inst)
    pos = {rv: n for n, rv in enumerate(order)}
    # links closed when the later endpoint (in order) is placed
    closing = [[] for _ in order]
    for r, req in enumerate(inst.requests):
        for lk in req.links:
            a, b = pos[(r, lk.i)], pos[(r, lk.j)]
            closing[max(a, b)].append((min(a, b), lk.traffic))
    cpu_cost = [[s.cpu_cost * inst.requests[r].vms[i].cpu for s in net.servers] for r, i in order]
    demand = [inst.requests[r].vms[i] for r, i in order]
    tail = [0.0] * (len(order) + 1)
    for n in range(len(order) - 1, -1, -1):
        tail[n] = tail[n + 1] + min(cpu_cost[n])
    route = {(k, p): paths.path(k, p) for k in range(S) for p in range(S) if k != p}

    cpu_left = [s.cpu for s in net.servers]
    mem_left = [s.mem for s in net.servers]
    bw_left = [e.bandwidth for e in net.edges]
    server_users = [0] * S
    edge_users = [0] * net.num_edges
    place = [-1] * len(order)
    req_of = [r for r, _ in order]
    used_by_request = [set() for _ in inst.requests]
    best = [math.inf, None]

    def dfs(n: int, cost: float):
        if cost + tail[n] >= best[0] - 1e-9:
            return
        if n == len(order):
            best[0], best[1] = cost, list(place)
            return
        vm = demand[n]
        r = req_of[n]
        for k in range(S):
            if k in used_by_request[r] or vm.cpu > cpu_left[k] or vm.mem > mem_left[k]:
                continue
            add = cpu_cost[n][k]
            if server_users[k] == 0:
                add += net.servers[k].fixed_cost
            touched = []
            ok = True
            for (m, traffic) in closing[n]:
                for e in route[(place[m], k)]:
                    if bw_left[e] < traffic - 1e-9:
                        ok = False
                        break
                    bw_left[e] -= traffic
                    if edge_users[e] == 0:
                        add += net.edges[e].fixed_cost
                    edge_users[e] += 1
                    touched.append((e, traffic))
                if not ok:
                    break
            if ok:
                place[n] = k
                used_by_request[r].add(k)
                server_users[k] += 1
                cpu_left[k] -= vm.cpu
                mem_left[k] -= vm.mem
                dfs(n + 1, cost + add)
                cpu_left[k] += vm.cpu
                mem_left[k] += vm.mem
                server_users[k] -= 1
                used_by_request[r].discard(k)
                place[n] = -1
            for e, traffic in touched:
                bw_left[e] += traffic
                edge_users[e] -= 1

    dfs(0, 0.0)
    if best[1] is None:
        raise Infeasible("no placement satisfies the capacities")
    assign = [[-1] * req.size for req in inst.requests]
    for n, (r, i) in enumerate(order):
        assign[r][i] = best[1][n]
    sol = MappingSolution.from_assignment(inst, paths, tuple(tuple(a) for a in assign))
    report = validate_solution(inst, paths, sol)
    if not report:
        raise AssertionError(f"oracle produced an invalid mapping: {report}")
    return sol
