"""Command-line front end: ``vmmap generate|solve|oracle|bench|report``."""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

from .bench import METHODS, SuiteConfig, markdown_table, read_csv, run_bench
from .bnb import BnbConfig, solve as bnb_solve
from .core import Instance, validate_solution
from .formulations import build_mc, build_p1, build_p2, build_rlt
from .heuristics import HeuristicConfig, solve_mapping
from .io import (FIXTURES, GeneratorConfig, generate_instance, load_fixture, parse_network,
                 read_instance, write_instance)
from .lagrange import evaluate_dual, extract_multipliers, partition_requests
from .lp import solve_lp
from .mip import MipConfig
from .oracle import DEFAULT_GUARD, Infeasible, SearchSpaceTooLarge, oracle_solve
from .paths import build_path_table

EXIT_SOLVED, EXIT_LIMIT, EXIT_INFEASIBLE, EXIT_NO_SOLUTION = 0, 2, 3, 4
BUILDERS = {"mc": build_mc, "rlt": build_rlt, "p1": build_p1}


def _network(spec: str):
    if spec in FIXTURES:
        return load_fixture(spec)
    return parse_network(Path(spec).read_text())


def _load(path: str) -> Instance:
    return read_instance(Path(path).read_text())


def _emit(payload: dict, out: str | None):
    text = json.dumps(payload, indent=1, default=_json_default) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json_default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    raise TypeError(type(obj))


def _clean(x: float):
    return x if isinstance(x, (int, float)) and math.isfinite(x) else None


def cmd_generate(args) -> int:
    cfg = GeneratorConfig(num_requests=args.requests, vms_per_request=args.vms, rng_seed=args.seed)
    inst = generate_instance(_network(args.network), cfg)
    text = write_instance(inst)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_SOLVED


def _status_code(status: str) -> int:
    return {"optimal": EXIT_SOLVED, "infeasible": EXIT_INFEASIBLE, "no_solution": EXIT_NO_SOLUTION,
            "time_limit": EXIT_LIMIT, "node_limit": EXIT_LIMIT}.get(status, EXIT_NO_SOLUTION)


def cmd_solve(args) -> int:
    inst = _load(args.instance)
    paths = build_path_table(inst.network)
    start = time.process_time()
    payload: dict = {"instance": inst.name, "method": args.method}
    if args.method == "bnb":
        cfg = BnbConfig(eps=args.eps, partition_delta=args.delta, time_limit_s=args.time_limit,
                        node_limit=args.node_limit, seed=args.seed,
                        heuristic=HeuristicConfig(deterministic=args.time_limit is None))
        rep = bnb_solve(inst, paths, cfg)
        status, sol = rep.status, rep.solution
        payload.update(lb=_clean(rep.lower_bound), ub=_clean(rep.upper_bound), nodes=rep.nodes,
                       root_lp=_clean(rep.root_lp), root_lagrange=_clean(rep.root_lagrange))
        if args.events:
            with open(args.events, "w") as fh:
                for ev in rep.events:
                    fh.write(json.dumps(ev.as_dict(), default=_json_default) + "\n")
    elif args.method == "lagrange":
        p2 = build_p2(inst, paths)
        lp = solve_lp(p2.relaxed())
        if not lp.optimal:
            status, sol = "infeasible", None
        else:
            lag = evaluate_dual(inst, paths, partition_requests(len(inst.requests), args.delta),
                                extract_multipliers(p2, lp))
            status, sol = "optimal", None
            payload.update(lb=lag.bound, lp=lp.objective)
    else:
        sys_ = BUILDERS[args.method](inst, paths)
        if args.relax:
            lp = solve_lp(sys_.relaxed())
            status, sol = ("optimal" if lp.optimal else lp.status), None
            payload.update(lb=_clean(lp.objective))
        else:
            mip = MipConfig(backend=args.backend, gap_tolerance=args.eps,
                            time_limit_s=args.time_limit, node_limit=args.node_limit)
            sol, res = solve_mapping(sys_, mip)
            status = res.status
            payload.update(lb=_clean(res.bound), ub=_clean(res.objective), nodes=res.nodes)
    payload["status"] = status
    payload["cpu_s"] = round(time.process_time() - start, 3)
    if sol is not None:
        payload.update(value=sol.objective, assign=[list(r) for r in sol.assign],
                       valid=validate_solution(inst, paths, sol).ok)
    _emit(payload, args.out)
    if args.method == "lagrange" or (args.method in BUILDERS and args.relax):
        return EXIT_SOLVED if status == "optimal" else EXIT_INFEASIBLE
    return _status_code(status)


def cmd_oracle(args) -> int:
    inst = _load(args.instance)
    paths = build_path_table(inst.network)
    try:
        sol = oracle_solve(inst, paths, args.guard)
    except Infeasible:
        _emit({"instance": inst.name, "status": "infeasible"}, args.out)
        return EXIT_INFEASIBLE
    except SearchSpaceTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    _emit({"instance": inst.name, "status": "optimal", "value": sol.objective,
           "assign": [list(r) for r in sol.assign]}, args.out)
    return EXIT_SOLVED


def cmd_bench(args) -> int:
    cfg = SuiteConfig(topologies=tuple(args.networks), num_requests=tuple(args.requests),
                      vms_per_request=args.vms, seed=args.seed, repeats=args.repeats,
                      methods=tuple(args.methods), delta=args.delta, time_limit_s=args.time_limit,
                      use_oracle=not args.no_oracle, oracle_guard=args.guard)
    md, csv_text, _ = run_bench(cfg)
    if args.csv:
        Path(args.csv).write_text(csv_text)
    if args.out:
        Path(args.out).write_text(md)
    else:
        sys.stdout.write(md)
    return EXIT_SOLVED


def cmd_report(args) -> int:
    md = markdown_table(read_csv(Path(args.csv).read_text()))
    if args.out:
        Path(args.out).write_text(md)
    else:
        sys.stdout.write(md)
    return EXIT_SOLVED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vmmap", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a seeded random instance")
    g.add_argument("--network", default="small-8-10", help=f"fixture name {sorted(FIXTURES)} or .net file")
    g.add_argument("--requests", type=int, default=1)
    g.add_argument("--vms", type=int, default=5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve an instance file")
    s.add_argument("instance")
    s.add_argument("--method", choices=["mc", "rlt", "p1", "lagrange", "bnb"], default="bnb")
    s.add_argument("--delta", type=int, default=1, help="requests per Lagrange block")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=1, choices=[1])
    s.add_argument("--time-limit", type=float)
    s.add_argument("--node-limit", type=int)
    s.add_argument("--eps", type=float, default=0.005)
    s.add_argument("--backend", choices=["highs", "native"], default="highs",
                   help="MIP engine for mc/rlt/p1")
    s.add_argument("--relax", action="store_true", help="report the LP relaxation only")
    s.add_argument("--events", help="write the node log (JSON lines) here")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("oracle", help="exhaustive search (small instances)")
    o.add_argument("instance")
    o.add_argument("--guard", type=int, default=DEFAULT_GUARD)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    b = sub.add_parser("bench", help="run a seeded benchmark suite")
    b.add_argument("--networks", nargs="+", default=["small-8-10"])
    b.add_argument("--requests", type=int, nargs="+", default=[1])
    b.add_argument("--vms", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--methods", nargs="+", default=["MC", "RLT", "P1"], choices=METHODS)
    b.add_argument("--delta", type=int, default=1)
    b.add_argument("--time-limit", type=float)
    b.add_argument("--guard", type=int, default=DEFAULT_GUARD)
    b.add_argument("--no-oracle", action="store_true")
    b.add_argument("--csv")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="Markdown summary of a bench CSV")
    r.add_argument("csv")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
