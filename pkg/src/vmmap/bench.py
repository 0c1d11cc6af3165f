"""Benchmark harness: relaxation values, closed gaps and exact-solver runs
over seeded instance suites, written as Markdown tables and CSV."""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from dataclasses import asdict, dataclass, field

from .bnb import BnbConfig, solve as bnb_solve
from .core import Instance
from .formulations import build_mc, build_p1, build_p2, build_rlt
from .heuristics import solve_mapping
from .io import GeneratorConfig, generate_instance, load_fixture
from .lagrange import evaluate_dual, extract_multipliers, partition_requests
from .lp import solve_lp
from .mip import MipConfig
from .oracle import Infeasible, SearchSpaceTooLarge, oracle_solve
from .paths import build_path_table

CSV_COLUMNS = ("topology", "S", "E", "vms", "method", "seed", "cpu_s", "value", "lb", "ub",
               "closed_gap", "nodes", "status")
METHODS = ("MC", "RLT", "P1", "LAG", "BNB", "MIP-P1", "MIP-MC")


class DegenerateGap(ValueError):
    pass


def closed_gap(v: float, v_mc: float, v_star: float) -> float:
    """Share (in percent) of the McCormick gap recovered by the bound ``v``."""
    if v_star - v_mc <= 1e-9:
        raise DegenerateGap(f"v* = {v_star} leaves no gap above v_MC = {v_mc}")
    return min(100.0, max(0.0, (v - v_mc) / (v_star - v_mc) * 100.0))


@dataclass
class BenchRow:
    topology: str
    S: int
    E: int
    vms: int
    method: str
    seed: int
    cpu_s: float
    value: float
    lb: float = math.nan
    ub: float = math.nan
    closed_gap: float | None = None
    nodes: int = 0
    status: str = "optimal"

    def csv_record(self) -> dict:
        rec = asdict(self)
        for key in ("cpu_s", "value", "lb", "ub"):
            rec[key] = _fmt(rec[key])
        rec["closed_gap"] = "-" if self.closed_gap is None else f"{self.closed_gap:.2f}"
        return rec


def _fmt(x: float) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "-"
    return f"{x:.4f}".rstrip("0").rstrip(".")


@dataclass
class SuiteConfig:
    topologies: tuple[str, ...] = ("small-8-10",)
    num_requests: tuple[int, ...] = (1,)
    vms_per_request: int = 5
    seed: int = 0
    repeats: int = 1
    methods: tuple[str, ...] = ("MC", "RLT", "P1")
    delta: int = 1
    time_limit_s: float | None = None
    use_oracle: bool = True
    oracle_guard: int = 10 ** 8
    bnb: BnbConfig = field(default_factory=BnbConfig)


def _lp_row(build, inst, paths):
    t = time.process_time()
    sol = solve_lp(build(inst, paths).relaxed())
    return time.process_time() - t, sol.objective if sol.optimal else math.nan, sol.status


def run_instance(topology: str, inst: Instance, seed: int, cfg: SuiteConfig) -> list[BenchRow]:
    """All requested methods on one instance; closed gaps filled in afterwards."""
    paths = build_path_table(inst.network)
    net = inst.network
    base = dict(topology=topology, S=net.num_servers, E=net.num_edges, vms=inst.num_vms, seed=seed)
    rows: list[BenchRow] = []
    builders = {"MC": build_mc, "RLT": build_rlt, "P1": build_p1}
    for m in cfg.methods:
        if m in builders:
            cpu, val, status = _lp_row(builders[m], inst, paths)
            rows.append(BenchRow(method=m, cpu_s=cpu, value=val, lb=val, status=status, **base))
        elif m == "LAG":
            t = time.process_time()
            p2 = build_p2(inst, paths)
            sol = solve_lp(p2.relaxed())
            lag = evaluate_dual(inst, paths, partition_requests(len(inst.requests), cfg.delta),
                                extract_multipliers(p2, sol))
            rows.append(BenchRow(method=f"LAG({cfg.delta})", cpu_s=time.process_time() - t,
                                 value=lag.bound, lb=lag.bound, **base))
        elif m == "BNB":
            bcfg = cfg.bnb
            if cfg.time_limit_s is not None:
                bcfg = BnbConfig(**{**bcfg.__dict__, "time_limit_s": cfg.time_limit_s})
            t = time.process_time()
            rep = bnb_solve(inst, paths, bcfg)
            rows.append(BenchRow(method="BNB", cpu_s=time.process_time() - t, value=rep.upper_bound,
                                 lb=rep.lower_bound, ub=rep.upper_bound, nodes=rep.nodes,
                                 status=rep.status, **base))
        elif m in ("MIP-P1", "MIP-MC"):
            sys = (build_p1 if m == "MIP-P1" else build_mc)(inst, paths)
            t = time.process_time()
            sol, res = solve_mapping(sys, MipConfig(backend="highs", time_limit_s=cfg.time_limit_s))
            rows.append(BenchRow(method=m, cpu_s=time.process_time() - t,
                                 value=sol.objective if sol else math.inf, lb=res.bound,
                                 ub=sol.objective if sol else math.inf, nodes=res.nodes,
                                 status=res.status, **base))
        else:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    v_star = math.inf
    if cfg.use_oracle:
        try:
            v_star = oracle_solve(inst, paths, cfg.oracle_guard).objective
        except (SearchSpaceTooLarge, Infeasible):
            pass
    if not math.isfinite(v_star):
        exact = [r.ub for r in rows if r.status == "optimal" and math.isfinite(r.ub)]
        v_star = min(exact, default=math.inf)
    mc = [r.value for r in rows if r.method == "MC"]
    v_mc = mc[0] if mc else _lp_row(build_mc, inst, paths)[1]
    for r in rows:
        bound = r.lb if math.isfinite(r.lb) else r.value
        if math.isfinite(v_star) and math.isfinite(bound):
            try:
                r.closed_gap = closed_gap(min(bound, v_star), v_mc, v_star)
            except DegenerateGap:
                r.closed_gap = None
    return rows


def run_bench(cfg: SuiteConfig) -> tuple[str, str, list[BenchRow]]:
    """Run the suite; returns (markdown, csv, rows).  Seeds are seed, seed+1, ..."""
    rows: list[BenchRow] = []
    for topo in cfg.topologies:
        skeleton = load_fixture(topo)
        for n_r in cfg.num_requests:
            for i in range(cfg.repeats):
                seed = cfg.seed + i
                inst = generate_instance(skeleton, GeneratorConfig(
                    num_requests=n_r, vms_per_request=cfg.vms_per_request, rng_seed=seed))
                rows.extend(run_instance(topo, inst, seed, cfg))
    return markdown_table(rows), to_csv(rows), rows


def to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.csv_record())
    return buf.getvalue()


def read_csv(text: str) -> list[BenchRow]:
    out = []
    num = lambda s: math.nan if s in ("-", "") else float(s)
    for rec in csv.DictReader(io.StringIO(text)):
        out.append(BenchRow(rec["topology"], int(rec["S"]), int(rec["E"]), int(rec["vms"]),
                            rec["method"], int(rec["seed"]), num(rec["cpu_s"]), num(rec["value"]),
                            num(rec["lb"]), num(rec["ub"]),
                            None if rec["closed_gap"] == "-" else float(rec["closed_gap"]),
                            int(rec["nodes"]), rec["status"]))
    return out


def markdown_table(rows: list[BenchRow]) -> str:
    """Averages per (topology, VM count, method); "-" when some run found no solution."""
    header = ("| (S,E) | VMs | method | cpu_s | value | closed gap % | nodes | runs |\n"
              "|---|---|---|---|---|---|---|---|\n")
    groups: dict[tuple, list[BenchRow]] = {}
    for r in rows:
        groups.setdefault((r.topology, r.S, r.E, r.vms, r.method), []).append(r)
    lines = []
    for (topo, S, E, vms, method), rs in groups.items():
        values = [r.value for r in rs]
        value = "-" if any(not math.isfinite(v) for v in values) else f"{statistics.fmean(values):.2f}"
        gaps = [r.closed_gap for r in rs if r.closed_gap is not None]
        gap = f"{statistics.fmean(gaps):.1f}" if gaps else "-"
        cpu = statistics.fmean(r.cpu_s for r in rs)
        nodes = statistics.fmean(r.nodes for r in rs)
        lines.append(f"| ({S},{E}) | {vms} | {method} | {cpu:.2f} | {value} | {gap} | {nodes:.0f} | {len(rs)} |")
    return header + "\n".join(lines) + ("\n" if lines else "")
