import random
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import generated, paths_for
from vmmap.core import MappingSolution, validate_solution
from vmmap.formulations import local_branch_distance
from vmmap.heuristics import HeuristicConfig, improve_local_branch, repair
from vmmap.lagrange import evaluate_dual, extract_multipliers, partition_requests
from vmmap.formulations import build_p2
from vmmap.lp import solve_lp
from vmmap.oracle import oracle_solve


@dataclass
class StubOutcome:
    """Stands in for a Lagrange outcome: votes, reservations and argmins."""
    votes: np.ndarray
    assign: tuple
    w: np.ndarray
    z: np.ndarray

    def theta_r_sum(self):
        return self.votes

    def reserved(self):
        return self.w, self.z

    def assignment(self):
        return self.assign


def root_outcome(inst, paths):
    p2 = build_p2(inst, paths)
    v = extract_multipliers(p2, solve_lp(p2.relaxed()))
    return evaluate_dual(inst, paths, partition_requests(len(inst.requests), 1), v)


def random_valid(inst, paths, rng):
    n_s = inst.network.num_servers
    while True:
        assign = [rng.sample(range(n_s), req.size) for req in inst.requests]
        sol = MappingSolution.from_assignment(inst, paths, assign)
        if validate_solution(inst, paths, sol):
            return sol


@pytest.mark.parametrize("topology,seed", [("small-8-10", 0), ("small-8-10", 3), ("tiny", 1)])
def test_repair_from_root_argmins(topology, seed):
    inst = generated(topology, 2, seed, 5 if topology != "tiny" else 3)
    paths = paths_for(inst)
    lag = root_outcome(inst, paths)
    res = repair(inst, paths, lag, HeuristicConfig(), lower_bound=lag.bound)
    assert res.solution is not None
    assert validate_solution(inst, paths, res.solution)
    assert res.upper_bound == res.solution.objective
    assert res.upper_bound >= oracle_solve(inst, paths).objective - 1e-6
    zero_votes = int((lag.theta_r_sum() == 0).sum())
    assert res.mip_solves == len(res.released) + 1 <= zero_votes + 1


def test_release_cheapest_first():
    inst = generated("small-8-10", 2, 1)
    paths = paths_for(inst)
    n_s = inst.network.num_servers
    votes = np.zeros(n_s)
    votes[0] = 2
    # only server 0 voted on: five VMs cannot share it, so servers must come back
    stub = StubOutcome(votes, ((0, 1, 2, 3, 4), (0, 1, 2, 3, 4)), np.zeros(n_s), np.zeros(n_s))
    res = repair(inst, paths, stub, HeuristicConfig(), improve=False)
    assert res.solution is not None and validate_solution(inst, paths, res.solution)
    order = sorted(range(1, n_s), key=lambda k: (inst.network.servers[k].fixed_cost, k))
    assert res.released == order[:len(res.released)]
    assert len(res.released) >= 4
    assert res.mip_solves == len(res.released) + 1 <= n_s
    used = {k for k, on in enumerate(res.solution.server_on) if on}
    assert used <= {0, *res.released}


def test_repair_respects_on_votes():
    inst = generated("small-8-10", 1, 2)
    paths = paths_for(inst)
    best = oracle_solve(inst, paths)
    n_s = inst.network.num_servers
    votes = np.array([1.0 if on else 0.0 for on in best.server_on])
    w = np.zeros(n_s)
    z = np.zeros(n_s)
    for i, k in enumerate(best.assign[0]):
        w[k] += inst.requests[0].vms[i].cpu
        z[k] += inst.requests[0].vms[i].mem
    res = repair(inst, paths, StubOutcome(votes, best.assign, w, z), HeuristicConfig())
    assert res.released == [] and res.mip_solves == 1
    assert res.upper_bound == pytest.approx(best.objective)


class TestLocalBranching:
    def test_zero_radius_keeps_incumbent(self):
        inst = generated("small-8-10", 2, 0)
        paths = paths_for(inst)
        inc = random_valid(inst, paths, random.Random(1))
        out = improve_local_branch(inst, paths, inc, HeuristicConfig(radius=0))
        assert out.assign == inc.assign and out.objective == inc.objective

    def test_recovers_nearby_optimum(self):
        inst = generated("small-8-10", 1, 4)
        paths = paths_for(inst)
        best = oracle_solve(inst, paths)
        row = list(best.assign[0])
        spare = next(k for k in range(8) if k not in row)
        row[0] = spare
        near = MappingSolution.from_assignment(inst, paths, [row])
        assert validate_solution(inst, paths, near) and near.objective > best.objective
        cfg = HeuristicConfig(radius=local_branch_distance(near, best), mip_node_budget=5000)
        out = improve_local_branch(inst, paths, near, cfg)
        assert out.objective == pytest.approx(best.objective)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10 ** 6), radius=st.integers(0, 12))
    def test_never_worse(self, seed, radius):
        inst = generated("tiny", 2, seed % 3, 3)
        paths = paths_for(inst)
        inc = random_valid(inst, paths, random.Random(seed))
        out = improve_local_branch(inst, paths, inc, HeuristicConfig(radius=radius))
        assert validate_solution(inst, paths, out)
        assert out.objective <= inc.objective + 1e-9
        # the read-back mapping drops idle switches, so only moves are bounded
        moves = sum(a != b for ra, rb in zip(inc.assign, out.assign) for a, b in zip(ra, rb))
        assert moves <= radius


def test_config_validation():
    with pytest.raises(ValueError):
        HeuristicConfig(n=0)
    with pytest.raises(ValueError):
        HeuristicConfig(radius=-1)
    inst = generated("small-8-10", 2, 0)
    assert HeuristicConfig().threshold(inst) == 1
    assert HeuristicConfig(n=5).threshold(inst) == 2
    assert HeuristicConfig().mip_config(inst).node_limit == 20
