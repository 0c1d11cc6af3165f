import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vmmap.lp import SystemBuilder
from vmmap.mip import MipConfig, pick_fractional, solve_mip


def enumerate_best(sys):
    """Minimum over every 0/1 vector (all columns binary)."""
    n = sys.num_vars
    pts = ((np.arange(2 ** n)[:, None] >> np.arange(n)) & 1).astype(float)
    act = pts @ sys.matrix().toarray().T
    ok = np.ones(len(pts), dtype=bool)
    for i, (sense, rhs) in enumerate(zip(sys.senses(), sys.rhs())):
        if sense == "<=":
            ok &= act[:, i] <= rhs + 1e-9
        elif sense == ">=":
            ok &= act[:, i] >= rhs - 1e-9
        else:
            ok &= np.abs(act[:, i] - rhs) <= 1e-9
    if not ok.any():
        return np.inf
    return float((pts[ok] @ sys.obj).min() + sys.obj_offset)


def random_binary_program(seed, n, m):
    rng = np.random.default_rng(seed)
    b = SystemBuilder()
    cols = [b.add_var(f"x{j}", 0, 1, float(c), binary=True)
            for j, c in enumerate(rng.integers(-20, 21, n))]
    for i in range(m):
        a = rng.integers(-5, 10, n).astype(float)
        b.add_row(f"r{i}", dict(zip(cols, a)), "<=", float(rng.integers(0, 15)))
    b.add_row("cover", {j: 1.0 for j in cols[: max(1, n // 3)]}, ">=", 1.0)
    return b.build()


def test_single_binary():
    b = SystemBuilder()
    x = b.add_var("x", 0, 1, 1.0, binary=True)
    b.add_row("lo", {x: 1.0}, ">=", 0.3)
    res = solve_mip(b.build(), MipConfig())
    assert res.status == "optimal"
    assert res.objective == 1.0 and res.x[0] == 1.0


def test_knapsack_five_items():
    profit = [10, 13, 7, 8, 11]
    weight = [5, 7, 3, 4, 6]
    cap = 14
    b = SystemBuilder()
    cols = [b.add_var(f"item{j}", 0, 1, -p, binary=True) for j, p in enumerate(profit)]
    b.add_row("cap", dict(zip(cols, weight)), "<=", cap)
    sys = b.build()
    best = max(sum(p for p, s in zip(profit, pick) if s)
               for pick in itertools.product((0, 1), repeat=5)
               if sum(w for w, s in zip(weight, pick) if s) <= cap)
    for backend in ("native", "highs"):
        res = solve_mip(sys, MipConfig(gap_tolerance=0.0, backend=backend))
        assert -res.objective == best


def test_infeasible():
    b = SystemBuilder()
    x = b.add_var("x", 0, 1, 1.0, binary=True)
    y = b.add_var("y", 0, 1, 1.0, binary=True)
    b.add_row("both", {x: 1.0, y: 1.0}, ">=", 1.5)
    b.add_row("one", {x: 1.0, y: 1.0}, "<=", 1.2)
    res = solve_mip(b.build(), MipConfig())
    assert res.status == "infeasible" and res.x is None


def test_node_limit_without_incumbent():
    sys = random_binary_program(3, 14, 6)
    res = solve_mip(sys, MipConfig(node_limit=1, gap_tolerance=0.0))
    assert res.status in ("node_limit", "no_solution", "optimal", "infeasible")
    if res.x is None:
        assert res.status != "optimal"


def test_branching_choice():
    x = np.array([0.5, 0.3, 0.9, 0.5])
    cand = np.arange(4)
    assert pick_fractional(x, cand, None) == 0
    assert pick_fractional(x, cand, np.array([0.0, 1.0, 1.0, 0.0])) == 1
    assert pick_fractional(x, cand, np.array([0.0, 0.0, 1.0, 1.0])) == 3


def test_priority_does_not_change_optimum():
    sys = random_binary_program(8, 10, 4)
    pr = np.arange(sys.num_vars, dtype=float)
    a = solve_mip(sys, MipConfig(gap_tolerance=0.0))
    b = solve_mip(sys, MipConfig(gap_tolerance=0.0, branch_priority=pr))
    assert a.objective == pytest.approx(b.objective, abs=1e-9)


def test_cutoff_prunes_everything():
    sys = random_binary_program(4, 8, 3)
    best = enumerate_best(sys)
    res = solve_mip(sys, MipConfig(gap_tolerance=0.0, cutoff=best - 1.0))
    assert res.x is None


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(2, 12), m=st.integers(1, 5))
def test_matches_enumeration(seed, n, m):
    sys = random_binary_program(seed, n, m)
    best = enumerate_best(sys)
    res = solve_mip(sys, MipConfig(gap_tolerance=0.0))
    if np.isinf(best):
        assert res.status == "infeasible"
        return
    assert res.status == "optimal"
    assert res.objective == pytest.approx(best, abs=1e-6)
    assert res.objective >= res.bound - 1e-6
    assert sys.max_violation(res.x) <= 1e-6
    again = solve_mip(sys, MipConfig(gap_tolerance=0.0))
    assert np.array_equal(again.x, res.x) and again.nodes == res.nodes


def test_twenty_binaries():
    sys = random_binary_program(11, 20, 4)
    res = solve_mip(sys, MipConfig(gap_tolerance=0.0))
    assert res.objective == pytest.approx(enumerate_best(sys), abs=1e-6)
