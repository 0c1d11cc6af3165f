"""Independent reference computations shared by the unit and acceptance tests.

Nothing here imports the model builders or solvers under test.
"""

import itertools
import math

import numpy as np


def coupling_point(n_s: int, rng: np.random.Generator):
    """A point (x_i, x_j, Y) with sum_k x_i = sum_p x_j = 1 whose off-diagonal
    Y has row sums x_i and column sums x_j: exactly the assignment rows plus
    their products for one VM pair, with Y >= 0."""
    kind = rng.integers(3)
    Y = np.zeros((n_s, n_s))
    if kind == 0:
        Y = rng.exponential(size=(n_s, n_s))
    elif kind == 1:
        # sparse: a handful of off-diagonal cells
        for _ in range(rng.integers(1, 4)):
            k, p = rng.choice(n_s, 2, replace=False)
            Y[k, p] += rng.exponential()
    else:
        # integral: one cell
        k, p = rng.choice(n_s, 2, replace=False)
        Y[k, p] = 1.0
    np.fill_diagonal(Y, 0.0)
    Y /= Y.sum()
    return Y.sum(axis=1), Y.sum(axis=0), Y


def mccormick_violation(xi, xj, Y) -> float:
    """Largest violation of the three upper/lower envelopes over k != p."""
    worst = 0.0
    n = len(xi)
    for k in range(n):
        for p in range(n):
            if k == p:
                continue
            y = Y[k, p]
            worst = max(worst, xi[k] + xj[p] - y - 1.0, y - xi[k], y - xj[p])
    return worst


def two_point_min(coef: float) -> tuple[float, int]:
    return min((0.0, 0), (coef, 1))


def routed_edges(paths, k, p):
    return () if k == p else paths.path(k, p)


def block_value(inst, paths, block, v, assign, servers_off=(), edges_off=()):
    """Subproblem objective of the cheapest point induced by a placement of
    the block's VMs, or None when the placement breaks a constraint.

    Reservations equal the used resources and per-request edge switches are
    exactly the routed edges; the multipliers are nonnegative, so nothing
    cheaper exists for the same placement."""
    net = inst.network
    cpu = np.zeros(net.num_servers)
    mem = np.zeros(net.num_servers)
    bw = np.zeros(net.num_edges)
    value = 0.0
    for r in block:
        req = inst.requests[r]
        row = assign[r]
        used = set(row)
        if len(used) != req.size or used & set(servers_off):
            return None
        for i, k in enumerate(row):
            vm = req.vms[i]
            cpu[k] += vm.cpu
            mem[k] += vm.mem
            value += net.servers[k].cpu_cost * vm.cpu
        value += sum(v.eta[r, k] for k in used)
        per_request = np.zeros(net.num_edges)
        for lk in req.links:
            for e in routed_edges(paths, row[lk.i], row[lk.j]):
                per_request[e] += lk.traffic
        on = np.flatnonzero(per_request > 0)
        if set(on.tolist()) & set(edges_off):
            return None
        if np.any(per_request > np.array([e.bandwidth for e in net.edges]) + 1e-9):
            return None
        value += sum(v.zeta[r, e] for e in on)
        bw += per_request
    for k, s in enumerate(net.servers):
        if cpu[k] > s.cpu + 1e-9 or mem[k] > s.mem + 1e-9:
            return None
    for e, ed in enumerate(net.edges):
        if bw[e] > ed.bandwidth + 1e-9:
            return None
    value += float(v.lam @ cpu + v.mu @ mem + v.sigma @ bw)
    return value


def block_placements(inst, block):
    n_s = inst.network.num_servers
    per = [itertools.permutations(range(n_s), inst.requests[r].size) for r in block]
    for combo in itertools.product(*[list(p) for p in per]):
        yield dict(zip(block, combo))


def enumerate_block(inst, paths, block, v, servers_off=(), edges_off=()):
    """Minimum block objective over all injective placements (inf if none)."""
    best, arg = math.inf, None
    for assign in block_placements(inst, block):
        val = block_value(inst, paths, block, v, assign, servers_off, edges_off)
        if val is not None and val < best:
            best, arg = val, assign
    return best, arg
