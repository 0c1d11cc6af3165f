import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import generated, network, paths_for, request
from vmmap.core import (CostBreakdown, DisconnectedNetwork, IndexOutOfRange, Instance,
                        MappingSolution, ModelError, PhysicalNetwork, objective_of,
                        validate_solution)
from vmmap.oracle import oracle_solve
from vmmap.paths import build_path_table


def one_vm_instance(F=7.0, A=10.0, c=3.0):
    net = network([(8, 64, F, A)], [])
    return Instance(net, (request(0, [(c, 2)]),))


def brute_cost(inst, assign, server_on, edge_on):
    # second implementation of the cost: plain loops over the raw data
    net = inst.network
    total = 0.0
    for k in range(net.num_servers):
        if server_on[k]:
            total += net.servers[k].fixed_cost
    for r in range(len(inst.requests)):
        for i in range(inst.requests[r].size):
            total += net.servers[assign[r][i]].cpu_cost * inst.requests[r].vms[i].cpu
    for e in range(net.num_edges):
        if edge_on[e]:
            total += net.edges[e].fixed_cost
    return total


class TestValidate:
    def test_single_vm_passes(self):
        inst = one_vm_instance()
        paths = build_path_table(inst.network)
        sol = MappingSolution.from_assignment(inst, paths, [[0]])
        report = validate_solution(inst, paths, sol)
        assert report.ok and report.first_violation is None
        assert sol.objective == 7.0 + 10.0 * 3.0

    def test_colocated_vms_fail_location(self):
        net = network([(32, 512, 5, 1), (32, 512, 5, 1)], [(0, 1, 100, 1)])
        inst = Instance(net, (request(0, [(1, 2), (1, 2)], [(0, 1, 10)]),))
        paths = build_path_table(net)
        sol = MappingSolution.from_assignment(inst, paths, [[0, 0]])
        report = validate_solution(inst, paths, sol)
        assert not report.families["LC"]
        assert report.first_violation.startswith("LC")

    def test_capacity_violation_named(self):
        net = network([(4, 512, 5, 1), (32, 512, 5, 1)], [(0, 1, 100, 1)])
        inst = Instance(net, (request(0, [(3, 2)]), request(1, [(3, 2)])))
        paths = build_path_table(net)
        sol = MappingSolution.from_assignment(inst, paths, [[0], [0]])
        report = validate_solution(inst, paths, sol)
        assert not report.families["KP"] and report.first_violation == "KP[k=0]"

    def test_bandwidth_violation(self):
        net = network([(32, 512, 5, 1), (32, 512, 5, 1)], [(0, 1, 50, 1)])
        inst = Instance(net, (request(0, [(1, 2), (1, 2)], [(0, 1, 80)]),))
        paths = build_path_table(net)
        sol = MappingSolution.from_assignment(inst, paths, [[0, 1]])
        assert not validate_solution(inst, paths, sol).families["QC"]

    def test_wrong_objective_detected(self):
        inst = one_vm_instance()
        paths = build_path_table(inst.network)
        sol = MappingSolution.from_assignment(inst, paths, [[0]])
        bad = MappingSolution(sol.assign, sol.server_on, sol.edge_on, sol.objective + 1.0)
        assert not validate_solution(inst, paths, bad).families["OBJ"]

    def test_server_off_but_used(self):
        inst = one_vm_instance()
        paths = build_path_table(inst.network)
        bad = MappingSolution(((0,),), (False,), (), 30.0)
        assert not validate_solution(inst, paths, bad).ok

    def test_index_out_of_range(self):
        inst = one_vm_instance()
        paths = build_path_table(inst.network)
        with pytest.raises(IndexOutOfRange):
            validate_solution(inst, paths, MappingSolution(((3,),), (True,), (), 0.0))
        with pytest.raises(IndexOutOfRange):
            MappingSolution.from_assignment(inst, paths, [[5]])

    def test_oracle_solution_two_requests(self):
        inst = generated("small-8-10", 2, 1)
        paths = paths_for(inst)
        sol = oracle_solve(inst, paths)
        report = validate_solution(inst, paths, sol)
        assert report.ok
        assert report.objective == pytest.approx(sol.objective, abs=1e-6)
        assert brute_cost(inst, sol.assign, sol.server_on, sol.edge_on) == pytest.approx(sol.objective)


class TestObjective:
    def test_empty_cost(self):
        net = network([(8, 64, 7, 10)], [])
        inst = Instance(net, (request(0, [(1, 2)]),))
        sol = MappingSolution(((0,),), (False,), (), 0.0)
        # the CPU term still counts the placed VM; only the switches are zero
        assert objective_of(inst, sol) == 10.0
        assert CostBreakdown().total == 0.0

    def test_hand_example(self):
        inst = one_vm_instance(F=7, A=10, c=3)
        paths = build_path_table(inst.network)
        assert objective_of(inst, MappingSolution.from_assignment(inst, paths, [[0]])) == 37.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_independent_summation(self, seed):
        inst = generated("abilene-12-15", 2, seed)
        paths = paths_for(inst)
        rng = random.Random(seed)
        for _ in range(20):
            assign = [rng.sample(range(12), req.size) for req in inst.requests]
            sol = MappingSolution.from_assignment(inst, paths, assign)
            assert objective_of(inst, sol) == pytest.approx(
                brute_cost(inst, sol.assign, sol.server_on, sol.edge_on), abs=1e-9)
            b = sol.breakdown
            assert min(b.server_fixed, b.cpu_load, b.edge_fixed) >= 0


class TestInvariants:
    def test_bad_networks_rejected(self):
        with pytest.raises(DisconnectedNetwork):
            network([(8, 8, 1, 1)] * 3, [(0, 1, 1, 1)])
        with pytest.raises(ModelError):
            network([(8, 8, 1, 1)] * 2, [(0, 0, 1, 1)])
        with pytest.raises(ModelError):
            network([(8, 8, 1, 1)] * 2, [(0, 1, 1, 1), (1, 0, 1, 1)])

    def test_request_must_be_connected(self):
        with pytest.raises(ModelError):
            request(0, [(1, 2)] * 3, [(0, 1, 5)])
        with pytest.raises(ModelError):
            request(0, [(1, 2)] * 2, [(1, 0, 5)])

    def test_extra_server_costs_exactly_its_fixed_cost(self):
        inst = generated("small-8-10", 1, 2)
        paths = paths_for(inst)
        sol = oracle_solve(inst, paths)
        idle = next(k for k, on in enumerate(sol.server_on) if not on)
        on = list(sol.server_on)
        on[idle] = True
        bigger = MappingSolution(sol.assign, tuple(on), sol.edge_on, 0.0)
        assert objective_of(inst, bigger) - objective_of(inst, sol) == pytest.approx(
            inst.network.servers[idle].fixed_cost)


def _relabel(inst: Instance, sigma, tau):
    """Same instance with servers renamed by sigma and edges reordered by tau."""
    from vmmap.core import Edge, Server
    net = inst.network
    inv = {new: old for old, new in enumerate(sigma)}
    servers = tuple(Server(new, *(lambda s: (s.cpu, s.mem, s.fixed_cost, s.cpu_cost))(net.servers[inv[new]]))
                    for new in range(net.num_servers))
    edges = []
    for new_e, old_e in enumerate(tau):
        e = net.edges[old_e]
        edges.append(Edge(new_e, sigma[e.u], sigma[e.v], e.bandwidth, e.fixed_cost))
    return Instance(PhysicalNetwork(servers, tuple(edges)), inst.requests)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 50), data=st.data())
def test_objective_invariant_under_relabelling(seed, data):
    inst = generated("small-8-10", 1, seed % 5)
    net = inst.network
    sigma = data.draw(st.permutations(range(net.num_servers)))
    tau = data.draw(st.permutations(range(net.num_edges)))
    rng = random.Random(seed)
    assign = [rng.sample(range(net.num_servers), req.size) for req in inst.requests]
    sol = MappingSolution.from_assignment(inst, paths_for(inst), assign)
    other = _relabel(inst, sigma, tau)
    old_of_new_edge = dict(enumerate(tau))
    moved = MappingSolution(
        tuple(tuple(sigma[k] for k in row) for row in sol.assign),
        tuple(sol.server_on[sigma.index(k)] for k in range(net.num_servers)),
        tuple(sol.edge_on[old_of_new_edge[e]] for e in range(net.num_edges)), 0.0)
    assert objective_of(other, moved) == pytest.approx(objective_of(inst, sol), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_validate_accepts_every_claimed_feasible_solution(seed):
    # random placements that validate as feasible must also be recomputed consistently
    inst = generated("small-8-10", 2, seed % 7)
    paths = paths_for(inst)
    rng = random.Random(seed)
    assign = [rng.sample(range(8), req.size) for req in inst.requests]
    sol = MappingSolution.from_assignment(inst, paths, assign)
    report = validate_solution(inst, paths, sol)
    assert report.families["AC"] and report.families["LC"] and report.families["ON"]
    assert report.families["OBJ"]
    loads = [0.0] * inst.network.num_edges
    for r, req in enumerate(inst.requests):
        for lk in req.links:
            for e in paths.path(assign[r][lk.i], assign[r][lk.j]):
                loads[e] += lk.traffic
    qc = all(loads[e] <= ed.bandwidth for e, ed in enumerate(inst.network.edges))
    assert report.families["QC"] == qc


def test_all_injective_assignments_of_tiny_case():
    net = network([(4, 64, 3, 1), (4, 64, 4, 2), (4, 64, 5, 3)], [(0, 1, 10, 1), (1, 2, 10, 1)])
    inst = Instance(net, (request(0, [(2, 2), (2, 2)], [(0, 1, 5)]),))
    paths = build_path_table(net)
    for assign in itertools.permutations(range(3), 2):
        sol = MappingSolution.from_assignment(inst, paths, [assign])
        assert validate_solution(inst, paths, sol).ok
