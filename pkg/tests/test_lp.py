import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from conftest import generated, paths_for
from vmmap.formulations import build_mc
from vmmap.lp import (BadIndex, ModelSystem, Row, SystemBuilder, add_rows, duality_residual,
                      solve_lp, write_lp_text)


def single_var(rows):
    b = SystemBuilder()
    x = b.add_var("x", 0, 1, 1.0)
    for name, sense, rhs in rows:
        b.add_row(name, {x: 1.0}, sense, rhs)
    return b.build()


def cvxopt_value(sys: ModelSystem) -> float:
    """Optimum of the relaxation by cvxopt's interior-point LP solver."""
    cvxopt = pytest.importorskip("cvxopt")
    from cvxopt import matrix, solvers, spmatrix
    n = sys.num_vars
    A = sys.matrix().tocoo()
    senses, rhs = sys.senses(), sys.rhs()
    g_rows, g_cols, g_vals, h = [], [], [], []
    e_rows, e_cols, e_vals, b = [], [], [], []
    eq_of, ineq_of = {}, {}
    for i, s in enumerate(senses):
        if s == "=":
            eq_of[i] = len(b)
            b.append(rhs[i])
        else:
            ineq_of[i] = len(h)
            h.append(rhs[i] if s == "<=" else -rhs[i])
    for i, j, a in zip(A.row, A.col, A.data):
        if senses[i] == "=":
            e_rows.append(eq_of[i]); e_cols.append(int(j)); e_vals.append(float(a))
        else:
            g_rows.append(ineq_of[i]); g_cols.append(int(j))
            g_vals.append(float(a) if senses[i] == "<=" else -float(a))
    for j in range(n):
        g_rows += [len(h), len(h) + 1]
        g_cols += [j, j]
        g_vals += [1.0, -1.0]
        h += [sys.upper[j], -sys.lower[j]]
    G = spmatrix(g_vals, g_rows, g_cols, (len(h), n))
    solvers.options.update(show_progress=False, abstol=1e-9, reltol=1e-10, feastol=1e-9)
    kw = {}
    if b:
        # the interior-point KKT solve needs independent equalities
        Ae = np.zeros((len(b), n))
        np.add.at(Ae, (e_rows, e_cols), e_vals)
        _, R, piv = scipy.linalg.qr(Ae.T, mode="economic", pivoting=True)
        rank = int((np.abs(np.diag(R)) > 1e-9 * max(1.0, abs(R[0, 0]))).sum())
        keep = np.sort(piv[:rank])
        kw = dict(A=matrix(Ae[keep]), b=matrix(np.asarray(b)[keep]))
    res = solvers.lp(matrix(sys.obj.astype(float)), G, matrix(h), **kw, solver=None)
    # at tight tolerances the method may stop short of its own test; accept a certified gap
    assert res["status"] == "optimal" or (res["relative gap"] < 1e-7
                                          and res["primal infeasibility"] < 1e-7)
    return float(res["primal objective"]) + sys.obj_offset


class TestSolveLp:
    @pytest.mark.parametrize("method", ["highs", "simplex"])
    def test_lower_bound_row(self, method):
        sol = solve_lp(single_var([("lo", ">=", 0.3)]), method)
        assert sol.optimal
        assert sol.objective == pytest.approx(0.3)
        assert sol.duals[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("method", ["highs", "simplex"])
    def test_infeasible_pair(self, method):
        sol = solve_lp(single_var([("hi", "<=", 0.2), ("lo", ">=", 0.5)]), method)
        assert sol.status == "infeasible"

    def test_multiplier_orientation(self):
        b = SystemBuilder()
        x = b.add_var("x", 0, 1, -1.0)
        b.add_row("cap", {x: 1.0}, "<=", 0.4)
        sys = b.build()
        sol = solve_lp(sys)
        assert sol.duals[0] == pytest.approx(-1.0)
        assert sol.multiplier(sys, "cap") == pytest.approx(1.0)

    def test_needs_finite_bounds(self):
        b = SystemBuilder()
        b.add_var("x", 0, np.inf, 1.0)
        with pytest.raises(ValueError):
            solve_lp(b.build())

    @pytest.mark.parametrize("seed", range(2))
    def test_mc_relaxation_matches_interior_point(self, seed):
        inst = generated("small-8-10", 1, seed)
        sys = build_mc(inst, paths_for(inst)).relaxed()
        ours = solve_lp(sys)
        assert ours.optimal
        assert ours.objective == pytest.approx(cvxopt_value(sys), abs=1e-5)
        assert duality_residual(sys, ours) <= 1e-6 * (1 + abs(ours.objective))
        assert sys.max_violation(ours.x) <= 1e-7

    def test_native_simplex_matches_highs(self):
        inst = generated("tiny", 1, 0, vms=3)
        sys = build_mc(inst, paths_for(inst)).relaxed()
        a, b = solve_lp(sys, "highs"), solve_lp(sys, "simplex")
        assert b.optimal and a.objective == pytest.approx(b.objective, abs=1e-6)
        assert duality_residual(sys, b) <= 1e-6 * (1 + abs(b.objective))

    def test_simplex_warm_start(self):
        inst = generated("tiny", 1, 1, vms=3)
        sys = build_mc(inst, paths_for(inst)).relaxed()
        first = solve_lp(sys, "simplex")
        again = solve_lp(sys, "simplex", basis=first.basis)
        assert again.objective == pytest.approx(first.objective, abs=1e-9)
        assert again.iterations <= first.iterations


class TestAddRows:
    def base(self):
        inst = generated("tiny", 2, 0, vms=3)
        return build_mc(inst, paths_for(inst)).relaxed()

    def test_zero_row(self):
        sys = self.base()
        before = solve_lp(sys).objective
        after = solve_lp(add_rows(sys, [Row.make("zero", {}, "<=", 0.0)])).objective
        assert after == pytest.approx(before, abs=1e-7)

    def test_duplicate_row(self):
        sys = self.base()
        sol = solve_lp(sys)
        tight = next(r for r in sys.rows if abs(r.activity(sol.x) - r.rhs) < 1e-9 and r.idx.size)
        dup = Row(tight.name + "'", tight.idx, tight.coef, tight.sense, tight.rhs)
        assert solve_lp(add_rows(sys, [dup])).objective == pytest.approx(sol.objective, abs=1e-7)

    def test_violated_cut_raises_value(self):
        sys = self.base()
        sol = solve_lp(sys)
        vs = sys.meta
        # demand one more open server than the relaxation pays for
        opened = float(sol.x[vs.theta].sum())
        cut = Row.make("more", {j: 1.0 for j in vs.theta}, ">=", np.floor(opened) + 1.0)
        assert cut.violation(sol.x) > 0
        grown = solve_lp(add_rows(sys, [cut]))
        assert grown.objective > sol.objective + 1e-6
        fresh = solve_lp(ModelSystem(sys.names, sys.lower, sys.upper, sys.obj, sys.integer,
                                     list(sys.rows) + [cut], sys.obj_offset, sys.meta))
        assert grown.objective == pytest.approx(fresh.objective, abs=1e-7)

    def test_bad_index(self):
        with pytest.raises(BadIndex):
            add_rows(self.base(), [Row.make("bad", {10 ** 6: 1.0}, "<=", 1.0)])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), alpha=st.floats(0.1, 50))
def test_objective_scaling(seed, alpha):
    rng = np.random.default_rng(seed)
    n, m = 6, 4
    b = SystemBuilder()
    cols = [b.add_var(f"x{j}", 0, 1, float(c)) for j, c in enumerate(rng.normal(size=n))]
    for i in range(m):
        b.add_row(f"r{i}", dict(zip(cols, rng.uniform(0, 1, n))), "<=", float(rng.uniform(1, 3)))
    sys = b.build()
    s1 = solve_lp(sys)
    s2 = solve_lp(sys.with_objective(sys.obj * alpha))
    assert s2.objective == pytest.approx(alpha * s1.objective, abs=1e-7 * (1 + abs(s2.objective)))
    assert duality_residual(sys, s1) <= 1e-6 * (1 + abs(s1.objective))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_valid_inequality_never_lowers_minimum(seed):
    rng = np.random.default_rng(seed)
    n = 5
    b = SystemBuilder()
    cols = [b.add_var(f"x{j}", 0, 1, float(c)) for j, c in enumerate(rng.uniform(-1, 1, n))]
    b.add_row("sum", {j: 1.0 for j in cols}, ">=", 1.0)
    sys = b.build()
    base = solve_lp(sys).objective
    extra = Row.make("extra", dict(zip(cols, rng.uniform(-1, 1, n))), "<=", float(rng.uniform(0, 2)))
    grown = solve_lp(add_rows(sys, [extra]))
    if grown.optimal:
        assert grown.objective >= base - 1e-9
    native = solve_lp(add_rows(sys, [extra]), "simplex")
    assert native.status == grown.status
    if native.optimal:
        assert native.objective == pytest.approx(grown.objective, abs=1e-7)


def test_lp_text_writer():
    sys = single_var([("lo[k=1]", ">=", 0.3)])
    text = write_lp_text(sys)
    assert "Minimize" in text and "Subject To" in text and text.rstrip().endswith("End")
    assert "lo(k_1): 1.0 x >= 0.3" in text
