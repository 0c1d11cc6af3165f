"""Sparse linear systems and the LP solve entry point.

A :class:`ModelSystem` is an immutable bag of variables (bounds, objective,
integrality, name) and rows.  Derived systems (extra rows, tightened bounds)
share the parent's arrays and cached matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import highspy

from .simplex import NumericalFailure, simplex_solve

SENSES = ("<=", "=", ">=")


class BadIndex(IndexError):
    pass


class IterationLimit(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Row:
    name: str
    idx: np.ndarray
    coef: np.ndarray
    sense: str
    rhs: float
    family: str = ""

    @classmethod
    def make(cls, name: str, terms: dict[int, float] | Iterable[tuple[int, float]],
             sense: str, rhs: float, family: str = "") -> "Row":
        if sense not in SENSES:
            raise ValueError(f"bad sense {sense!r}")
        acc: dict[int, float] = {}
        items = terms.items() if isinstance(terms, dict) else terms
        for j, a in items:
            acc[int(j)] = acc.get(int(j), 0.0) + float(a)
        keys = sorted(j for j, a in acc.items() if a != 0.0)
        return cls(name, np.array(keys, dtype=np.int64),
                   np.array([acc[j] for j in keys], dtype=float), sense, float(rhs), family)

    def activity(self, x: np.ndarray) -> float:
        return float(self.coef @ np.asarray(x)[self.idx]) if self.idx.size else 0.0

    def violation(self, x: np.ndarray) -> float:
        a = self.activity(x)
        if self.sense == "<=":
            return max(0.0, a - self.rhs)
        if self.sense == ">=":
            return max(0.0, self.rhs - a)
        return abs(a - self.rhs)

    def key(self) -> tuple:
        return (tuple(self.idx.tolist()), tuple(np.round(self.coef, 12).tolist()),
                self.sense, round(self.rhs, 12))


class ModelSystem:
    """Minimize ``obj @ x + obj_offset`` over rows and variable bounds."""

    def __init__(self, names: Sequence[str], lower, upper, obj, integer,
                 rows: Sequence[Row] = (), obj_offset: float = 0.0, meta=None):
        self.names = list(names)
        n = len(self.names)
        self.lower = np.asarray(lower, dtype=float).copy()
        self.upper = np.asarray(upper, dtype=float).copy()
        self.obj = np.asarray(obj, dtype=float).copy()
        self.integer = np.asarray(integer, dtype=bool).copy()
        if not (len(self.lower) == len(self.upper) == len(self.obj) == len(self.integer) == n):
            raise ValueError("variable arrays have inconsistent lengths")
        if np.any(self.lower > self.upper):
            bad = int(np.flatnonzero(self.lower > self.upper)[0])
            raise ValueError(f"variable {self.names[bad]} has lower > upper")
        if np.any(self.integer & ((self.lower < 0) | (self.upper > 1))):
            raise ValueError("integer variables must be binary")
        self.rows: list[Row] = list(rows)
        for row in self.rows:
            if row.idx.size and (row.idx.min() < 0 or row.idx.max() >= n):
                raise BadIndex(f"row {row.name} references a missing variable")
        self.obj_offset = float(obj_offset)
        self.meta = meta
        self._name_index: dict[str, int] | None = None
        self._row_index: dict[str, int] | None = None
        self._matrix: sp.csr_matrix | None = None
        self._parent: ModelSystem | None = None

    @property
    def num_vars(self) -> int:
        return len(self.names)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def var(self, name: str) -> int:
        if self._name_index is None:
            self._name_index = {nm: j for j, nm in enumerate(self.names)}
        return self._name_index[name]

    def row_position(self, name: str) -> int:
        if self._row_index is None:
            self._row_index = {row.name: i for i, row in enumerate(self.rows)}
        return self._row_index[name]

    def has_row(self, name: str) -> bool:
        try:
            self.row_position(name)
        except KeyError:
            return False
        return True

    def _derive(self, rows=None, lower=None, upper=None, obj=None, obj_offset=None) -> "ModelSystem":
        child = ModelSystem.__new__(ModelSystem)
        child.names = self.names
        child.lower = self.lower if lower is None else lower
        child.upper = self.upper if upper is None else upper
        child.obj = self.obj if obj is None else obj
        child.integer = self.integer
        child.rows = self.rows if rows is None else rows
        child.obj_offset = self.obj_offset if obj_offset is None else obj_offset
        child.meta = self.meta
        child._name_index = self._name_index
        child._row_index = None if rows is not None else self._row_index
        child._matrix = self._matrix if rows is None else None
        child._parent = self if rows is not None else self._parent
        if rows is None:
            child._row_index = self._row_index
        return child

    def with_rows(self, rows: Iterable[Row]) -> "ModelSystem":
        rows = list(rows)
        n = self.num_vars
        for row in rows:
            if row.idx.size and (row.idx.min() < 0 or row.idx.max() >= n):
                raise BadIndex(f"row {row.name} references a missing variable")
        if not rows:
            return self
        return self._derive(rows=self.rows + rows)

    def with_bounds(self, changes: dict[int, tuple[float, float]]) -> "ModelSystem":
        lower, upper = self.lower.copy(), self.upper.copy()
        for j, (lo, hi) in changes.items():
            lower[j], upper[j] = lo, hi
        return self._derive(lower=lower, upper=upper)

    def with_objective(self, obj, obj_offset: float = 0.0) -> "ModelSystem":
        return self._derive(obj=np.asarray(obj, dtype=float), obj_offset=obj_offset)

    def relaxed(self) -> "ModelSystem":
        child = self._derive()
        child.integer = np.zeros(self.num_vars, dtype=bool)
        return child

    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            base_rows = 0
            blocks = []
            parent = self._parent
            if parent is not None and parent._matrix is not None and parent.rows == self.rows[:len(parent.rows)]:
                blocks.append(parent._matrix)
                base_rows = len(parent.rows)
            rest = self.rows[base_rows:]
            if rest or not blocks:
                counts = [r.idx.size for r in rest]
                indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
                indices = np.concatenate([r.idx for r in rest]) if rest else np.zeros(0, np.int64)
                data = np.concatenate([r.coef for r in rest]) if rest else np.zeros(0)
                blocks.append(sp.csr_matrix((data, indices, indptr), shape=(len(rest), self.num_vars)))
            self._matrix = blocks[0] if len(blocks) == 1 else sp.vstack(blocks, format="csr")
        return self._matrix

    def senses(self) -> list[str]:
        return [r.sense for r in self.rows]

    def rhs(self) -> np.ndarray:
        return np.array([r.rhs for r in self.rows], dtype=float)

    def objective_value(self, x) -> float:
        return float(self.obj @ np.asarray(x)) + self.obj_offset

    def max_violation(self, x) -> float:
        x = np.asarray(x)
        worst = float(max(np.max(self.lower - x, initial=0.0), np.max(x - self.upper, initial=0.0)))
        if self.rows:
            act = self.matrix() @ x
            rhs = self.rhs()
            for i, row in enumerate(self.rows):
                if row.sense == "<=":
                    v = act[i] - rhs[i]
                elif row.sense == ">=":
                    v = rhs[i] - act[i]
                else:
                    v = abs(act[i] - rhs[i])
                worst = max(worst, v)
        return worst

    def __repr__(self):
        return f"ModelSystem({self.num_vars} vars, {self.num_rows} rows, {int(self.integer.sum())} binary)"


class SystemBuilder:
    """Incrementally collects variables and rows for a :class:`ModelSystem`."""

    def __init__(self):
        self.names: list[str] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.obj: list[float] = []
        self.integer: list[bool] = []
        self.rows: list[Row] = []
        self._index: dict[str, int] = {}

    def add_var(self, name: str, lower: float = 0.0, upper: float = 1.0,
                obj: float = 0.0, binary: bool = False) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name}")
        j = len(self.names)
        self._index[name] = j
        self.names.append(name)
        self.lower.append(lower)
        self.upper.append(upper)
        self.obj.append(obj)
        self.integer.append(binary)
        return j

    def add_row(self, name: str, terms, sense: str, rhs: float, family: str = "") -> Row:
        row = Row.make(name, terms, sense, rhs, family)
        self.rows.append(row)
        return row

    def build(self, meta=None, obj_offset: float = 0.0) -> ModelSystem:
        return ModelSystem(self.names, self.lower, self.upper, self.obj, self.integer,
                           self.rows, obj_offset, meta)


def add_rows(sys: ModelSystem, rows: Iterable[Row]) -> ModelSystem:
    """Append rows (e.g. cuts); the original system is left untouched."""
    return sys.with_rows(rows)


@dataclass
class LpSolution:
    """Primal/dual result of an LP solve.

    ``duals[i]`` is the sensitivity of the optimum to the right-hand side of
    row ``i`` in its stated orientation (``<=`` rows get values <= 0 in a
    minimization, ``>=`` rows values >= 0).
    """

    status: str
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    iterations: int = 0
    basis: tuple | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def multiplier(self, sys: ModelSystem, name: str) -> float:
        """Nonnegative multiplier of a named row in its canonical orientation."""
        i = sys.row_position(name)
        y = self.duals[i]
        return -y if sys.rows[i].sense == "<=" else y


def _highs_lp(sys: ModelSystem) -> highspy.HighsLp:
    A = sys.matrix()
    b = sys.rhs()
    senses = np.array(sys.senses(), dtype=object)
    inf = highspy.kHighsInf
    lp = highspy.HighsLp()
    lp.num_col_ = sys.num_vars
    lp.num_row_ = sys.num_rows
    lp.col_cost_ = sys.obj
    lp.col_lower_ = sys.lower
    lp.col_upper_ = sys.upper
    lp.row_lower_ = np.where(senses == "<=", -inf, b).astype(float)
    lp.row_upper_ = np.where(senses == ">=", inf, b).astype(float)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
    lp.a_matrix_.start_ = A.indptr
    lp.a_matrix_.index_ = A.indices
    lp.a_matrix_.value_ = A.data
    return lp


_MODEL_STATUS = {
    "kOptimal": "optimal",
    "kInfeasible": "infeasible",
    "kUnboundedOrInfeasible": "infeasible",
    "kUnbounded": "unbounded",
    "kTimeLimit": "time_limit",
    "kIterationLimit": "iteration_limit",
}


class LpSession:
    """A HiGHS model kept alive across bound changes and appended rows.

    Re-solves start from the previous basis, which makes branch-and-bound
    node LPs cheap.  The first solve uses an interior point method with
    crossover (degenerate assignment structure makes cold simplex slow).
    """

    def __init__(self, sys: ModelSystem, cold: str = "ipm"):
        self.sys = sys
        self.h = highspy.Highs()
        h = self.h
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("random_seed", 0)
        h.setOptionValue("primal_feasibility_tolerance", 1e-9)
        h.setOptionValue("dual_feasibility_tolerance", 1e-9)
        h.setOptionValue("solver", cold)
        h.passModel(_highs_lp(sys))
        self.lower = sys.lower.copy()
        self.upper = sys.upper.copy()
        self.num_rows = sys.num_rows
        self.senses = list(sys.senses())
        self._solved = False

    def set_bounds(self, lower: np.ndarray, upper: np.ndarray):
        diff = np.flatnonzero((lower != self.lower) | (upper != self.upper))
        if diff.size:
            self.h.changeColsBounds(diff.size, diff.astype(np.int32),
                                    lower[diff].astype(float), upper[diff].astype(float))
            self.lower[diff] = lower[diff]
            self.upper[diff] = upper[diff]

    def set_objective(self, obj: np.ndarray):
        idx = np.arange(len(obj), dtype=np.int32)
        self.h.changeColsCost(len(obj), idx, np.asarray(obj, dtype=float))

    def add_rows(self, rows: Sequence[Row]):
        inf = highspy.kHighsInf
        for row in rows:
            lo = -inf if row.sense == "<=" else row.rhs
            hi = inf if row.sense == ">=" else row.rhs
            self.h.addRow(lo, hi, row.idx.size, row.idx.astype(np.int32), row.coef)
            self.senses.append(row.sense)
        self.num_rows += len(rows)

    def delete_rows_from(self, first: int):
        if first < self.num_rows:
            idx = np.arange(first, self.num_rows, dtype=np.int32)
            self.h.deleteRows(idx.size, idx)
            del self.senses[first:]
            self.num_rows = first

    def solve(self, time_limit: float | None = None) -> LpSolution:
        h = self.h
        if self._solved:
            h.setOptionValue("solver", "simplex")
        # HiGHS measures its time limit from the creation of the model object
        limit = h.getRunTime() + float(time_limit) if time_limit is not None else highspy.kHighsInf
        h.setOptionValue("time_limit", limit)
        h.run()
        self._solved = True
        status = _MODEL_STATUS.get(h.getModelStatus().name, "numerical")
        info = h.getInfo()
        iters = int(info.simplex_iteration_count) + int(info.ipm_iteration_count)
        n = self.sys.num_vars
        if status != "optimal":
            return LpSolution(status, np.full(n, np.nan), np.zeros(self.num_rows), np.zeros(n),
                              math.nan, iters)
        sol = h.getSolution()
        x = np.asarray(sol.col_value)
        return LpSolution("optimal", x, np.asarray(sol.row_dual), np.asarray(sol.col_dual),
                          float(info.objective_function_value) + self.sys.obj_offset, iters)


def _solve_highs(sys: ModelSystem, time_limit: float | None) -> LpSolution:
    return LpSession(sys).solve(time_limit)


def _solve_native(sys: ModelSystem, basis) -> LpSolution:
    n = sys.num_vars
    try:
        res = simplex_solve(sys.obj, sys.matrix(), sys.senses(), sys.rhs(),
                            sys.lower, sys.upper, warm=basis)
    except NumericalFailure:
        return LpSolution("numerical", np.full(n, np.nan), np.zeros(sys.num_rows), np.zeros(n), math.nan)
    obj = res.objective + sys.obj_offset if res.status == "optimal" else math.nan
    warm = (res.head, res.state) if res.head is not None else None
    return LpSolution(res.status, res.x, res.y, res.d, obj, res.iterations, warm)


def solve_lp(sys: ModelSystem, method: str = "highs", basis=None,
             time_limit: float | None = None) -> LpSolution:
    """Solve the continuous relaxation of ``sys``.

    ``method`` is ``"highs"`` (HiGHS, interior point plus crossover) or
    ``"simplex"`` (the in-package bounded primal simplex, which also accepts a
    warm-start ``basis`` taken from a previous :class:`LpSolution`).
    """
    if not (np.all(np.isfinite(sys.lower)) and np.all(np.isfinite(sys.upper))):
        raise ValueError("solve_lp needs finite bounds on every variable")
    if method == "highs":
        return _solve_highs(sys, time_limit)
    if method == "simplex":
        return _solve_native(sys, basis)
    raise ValueError(f"unknown LP method {method!r}")


def duality_residual(sys: ModelSystem, sol: LpSolution) -> float:
    """|primal objective - dual objective| for an optimal solve."""
    dual_obj = float(sol.duals @ sys.rhs()) + float(sol.reduced_costs @ sol.x) + sys.obj_offset
    return abs(sol.objective - dual_obj)


def _lp_number(v: float) -> str:
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    return repr(float(v))


def _lp_name(name: str) -> str:
    # the LP text format forbids brackets, commas and '=' in identifiers
    out = name.replace("[", "(").replace("]", ")").replace(",", ";").replace("=", "_")
    return out if not out[0].isdigit() else "_" + out


def write_lp_text(sys: ModelSystem) -> str:
    """Dump a system in the common ``.lp`` interchange text format.

    Names are escaped as ``[ -> (``, ``] -> )``, ``, -> ;`` and ``= -> _``.
    """
    names = [_lp_name(nm) for nm in sys.names]

    def expr(idx, coef):
        parts = []
        for j, a in zip(idx, coef):
            sign = "-" if a < 0 else "+"
            parts.append(f"{sign} {_lp_number(abs(a))} {names[j]}")
        text = " ".join(parts) if parts else "0"
        return text[2:] if text.startswith("+ ") else text

    nz = np.flatnonzero(sys.obj)
    lines = ["\\ written by vmmap", "Minimize", f" obj: {expr(nz, sys.obj[nz])}"]
    if sys.obj_offset:
        lines[-1] += f" + {_lp_number(sys.obj_offset)} __offset"
    lines.append("Subject To")
    for row in sys.rows:
        lines.append(f" {_lp_name(row.name)}: {expr(row.idx, row.coef)} {row.sense} {_lp_number(row.rhs)}")
    lines.append("Bounds")
    for j, nm in enumerate(names):
        lines.append(f" {_lp_number(sys.lower[j])} <= {nm} <= {_lp_number(sys.upper[j])}")
    if sys.obj_offset:
        lines.append(" __offset = 1")
    binaries = [names[j] for j in np.flatnonzero(sys.integer)]
    if binaries:
        lines.append("Binaries")
        for k in range(0, len(binaries), 8):
            lines.append(" " + " ".join(binaries[k:k + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"
