"""Command-line front end: generate workloads, solve instances, sweep POP
parameters, and run the bound-vs-simulation analysis.

Exit codes: 0 success, 2 usage or input error, 3 infeasible solve.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys

from . import analysis, pop, problems, workloads
from .core import (
    FLOW_OBJECTIVES,
    MINIMIZE_OBJECTIVES,
    Objective,
    ProblemInstance,
    SCHEDULING_OBJECTIVES,
    check_feasibility,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3


class _InputError(Exception):
    """Bad input surfaced as exit code 2."""


def _comma_list(cast):
    def parse(text):
        try:
            return [cast(tok) for tok in text.split(",") if tok]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated {cast.__name__}s: {text!r}")

    return parse


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="popalloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a workload file")
    gen.add_argument("--kind", required=True, choices=["topology", "traffic", "jobs", "shards"])
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--model", help="topology: ring|grid|erdos_renyi; traffic: gravity|uniform|bimodal|poisson")
    gen.add_argument("--size", type=int, help="topology node parameter")
    gen.add_argument("--edge-prob", type=float, default=0.1, help="erdos_renyi edge probability")
    gen.add_argument("--topology", help="traffic: topology file to generate demands for")
    gen.add_argument("--scale", type=float, default=1.0, help="traffic: total demand / total capacity")
    gen.add_argument("--num-pairs", type=int, help="traffic: sample this many ordered pairs")
    gen.add_argument("--num-jobs", type=int, default=32)
    gen.add_argument("--num-types", type=int, default=3)
    gen.add_argument("--num-shards", type=int, default=16)
    gen.add_argument("--num-servers", type=int, default=4)
    gen.add_argument("--zipf-alpha", type=float, default=1.1)
    gen.add_argument("--tolerance", type=float, default=0.05)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--objective", required=True, choices=[o.value for o in Objective])
    common.add_argument("--topology", help="flow objectives: topology file")
    common.add_argument("--traffic", help="flow objectives: traffic file")
    common.add_argument("--jobs", help="scheduling objectives: jobs file")
    common.add_argument("--shards", help="load balancing: shards file")
    common.add_argument("--max-paths", type=int, default=problems.DEFAULT_MAX_PATHS)
    common.add_argument("--engine", default="builtin", choices=["builtin", "scipy"])
    common.add_argument("--out", help="results CSV (appended)")

    solve = sub.add_parser("solve", help="run one method on one instance", parents=[common])
    solve.add_argument("--method", default="exact", choices=["exact", "pop", "cspf", "greedy"])
    solve.add_argument("--k", type=int, default=1)
    solve.add_argument("--t", type=float, default=0.0)
    solve.add_argument("--partitioner", default="random", choices=sorted(pop.PARTITIONERS))
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--parallelism", type=int, default=1)
    solve.add_argument("--alloc-out", help="write the allocation to this file")
    solve.add_argument(
        "--no-ratio",
        action="store_true",
        help="skip the exact reference solve used for objective_ratio",
    )

    bench = sub.add_parser("bench", help="sweep k, t, seeds", parents=[common])
    bench.add_argument("--k-list", type=_comma_list(int), default=[1, 2, 4, 8])
    bench.add_argument("--t-list", type=_comma_list(float), default=[0.0])
    bench.add_argument("--seeds", type=_comma_list(int), default=[0])
    bench.add_argument("--partitioner", default="random", choices=sorted(pop.PARTITIONERS))
    bench.add_argument("--parallelism", type=int, default=1)

    analyze = sub.add_parser("analyze", help="Chernoff bound vs simulation")
    analyze.add_argument("--n", type=int, default=2000)
    analyze.add_argument("--r", type=int, default=2)
    analyze.add_argument("--k", type=int, default=2)
    analyze.add_argument("--trials", type=int, default=1000)
    analyze.add_argument("--deltas", type=_comma_list(float), default=[0.01, 0.02, 0.05])
    analyze.add_argument("--seed", type=int, default=0)
    analyze.add_argument("--bound-only", action="store_true", help="print closed-form bounds, no simulation")
    analyze.add_argument("--out", help="results CSV (appended)")

    return parser


def _digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def cmd_gen(args) -> int:
    if args.kind == "topology":
        if not args.model or args.size is None:
            raise _InputError("gen --kind topology requires --model and --size")
        topo = workloads.gen_topology(args.model, args.size, seed=args.seed, p=args.edge_prob)
        workloads.save_topology(topo, args.out)
    elif args.kind == "traffic":
        if not args.model or not args.topology:
            raise _InputError("gen --kind traffic requires --model and --topology")
        topo = workloads.load_topology(args.topology)
        traffic = workloads.gen_traffic(
            topo, args.model, seed=args.seed, scale=args.scale, num_pairs=args.num_pairs
        )
        workloads.save_traffic(traffic, args.out)
    elif args.kind == "jobs":
        instance = workloads.gen_jobs(args.num_jobs, args.num_types, seed=args.seed)
        workloads.save_jobs(instance, args.out)
    else:
        instance = workloads.gen_shards(
            args.num_shards,
            args.num_servers,
            zipf_alpha=args.zipf_alpha,
            seed=args.seed,
            tolerance=args.tolerance,
        )
        workloads.save_shards(instance, args.out)
    print(f"wrote {args.out} sha256={_digest(args.out)}")
    return EXIT_OK


def _load_instance(args) -> ProblemInstance:
    objective = Objective(args.objective)
    if objective in FLOW_OBJECTIVES:
        if not args.topology or not args.traffic:
            raise _InputError(f"objective {objective.value} requires --topology and --traffic")
        topo = workloads.load_topology(args.topology)
        traffic = workloads.load_traffic(args.traffic, topo)
        return problems.build_flow_instance(
            topo, list(traffic.demands), objective, p_max=args.max_paths
        )
    if objective in SCHEDULING_OBJECTIVES:
        if not args.jobs:
            raise _InputError(f"objective {objective.value} requires --jobs")
        return workloads.load_jobs(args.jobs, objective)
    if not args.shards:
        raise _InputError(f"objective {objective.value} requires --shards")
    return workloads.load_shards(args.shards)


def _run_method(instance, method, args, k=None, t=None, seed=None):
    if method == "exact":
        return problems.solve_instance(instance, engine=args.engine)
    if method == "pop":
        return pop.run_pop(
            instance,
            k=k if k is not None else args.k,
            t=t if t is not None else args.t,
            partitioner=args.partitioner,
            seed=seed if seed is not None else args.seed,
            parallelism=args.parallelism,
            engine=args.engine,
        )
    if method == "cspf":
        if instance.objective not in FLOW_OBJECTIVES:
            raise _InputError("cspf applies to flow objectives only")
        return problems.baseline_cspf(instance)
    if instance.objective is not Objective.MIN_SHARD_MOVEMENT:
        raise _InputError("greedy applies to load balancing only")
    return problems.baseline_greedy_balance(instance)


def _ratio(objective, value, exact_value):
    if exact_value is None or not math.isfinite(value) or not math.isfinite(exact_value):
        return ""
    if objective in MINIMIZE_OBJECTIVES:
        return exact_value / value if value else ""
    return value / exact_value if exact_value else ""


def _result_row(args, method, report, k, t, seed, exact_value):
    objective = Objective(args.objective)
    sub_ms = 1000.0 * max(report.runtime_subproblems, default=report.runtime_total)
    return {
        "method": method,
        "objective_kind": objective.value,
        "k": k if method == "pop" else "",
        "t": t if method == "pop" else "",
        "partitioner": getattr(args, "partitioner", "") if method == "pop" else "",
        "seed": seed if method == "pop" else "",
        "objective": report.objective_value,
        "objective_ratio": _ratio(objective, report.objective_value, exact_value),
        "runtime_ms": 1000.0 * report.runtime_total,
        "subproblem_max_ms": sub_ms,
    }


def _write_allocation(alloc, path):
    with open(path, "w") as fh:
        fh.write(f"format_version: {workloads.FORMAT_VERSION}\n")
        for (cid, rid, pidx), value in sorted(alloc.entries.items(), key=lambda kv: str(kv[0])):
            fh.write(f"alloc {cid} {rid if rid is not None else '-'} "
                     f"{pidx if pidx is not None else '-'} {value!r}\n")


def cmd_solve(args) -> int:
    instance = _load_instance(args)
    alloc, report = _run_method(instance, args.method, args)

    exact_value = None
    if args.method == "exact":
        exact_value = report.objective_value
    elif not args.no_ratio:
        _, exact_report = problems.solve_instance(instance, engine=args.engine)
        exact_value = exact_report.objective_value

    violations = check_feasibility(instance, alloc)
    feasible = report.feasible and not violations
    row = _result_row(args, args.method, report, args.k, args.t, args.seed, exact_value)
    if args.out:
        workloads.write_results(args.out, [row])
    if args.alloc_out:
        _write_allocation(alloc, args.alloc_out)
    ratio = row["objective_ratio"]
    print(
        f"{args.method} {args.objective}: objective={report.objective_value:.6g} "
        f"ratio={ratio if ratio != '' else 'n/a'} "
        f"runtime_ms={row['runtime_ms']:.1f} feasible={feasible}"
    )
    for v in violations[:10]:
        print(f"  violation: {v}", file=sys.stderr)
    return EXIT_OK if feasible else EXIT_INFEASIBLE


def cmd_bench(args) -> int:
    instance = _load_instance(args)
    _, exact_report = problems.solve_instance(instance, engine=args.engine)
    exact_value = exact_report.objective_value
    rows = [_result_row(args, "exact", exact_report, "", "", "", exact_value)]
    for k in args.k_list:
        for t in args.t_list:
            for seed in args.seeds:
                _, report = _run_method(instance, "pop", args, k=k, t=t, seed=seed)
                rows.append(_result_row(args, "pop", report, k, t, seed, exact_value))
    if args.out:
        workloads.write_results(args.out, rows)
    for row in rows:
        print(
            f"{row['method']:>5} k={row['k'] or '-':<3} t={row['t'] if row['t'] != '' else '-':<4} "
            f"seed={row['seed'] if row['seed'] != '' else '-':<3} "
            f"objective={row['objective']:.6g} ratio={row['objective_ratio'] or 'n/a'} "
            f"runtime_ms={row['runtime_ms']:.1f}"
        )
    return EXIT_OK


def cmd_analyze(args) -> int:
    rows = []
    if args.bound_only:
        for delta in args.deltas:
            bound = analysis.pop_gap_bound(delta, args.n, args.r, args.k)
            print(f"delta={delta} bound={bound:.6g}")
            rows.append({"method": "bound", "delta": delta, "bound": bound, "k": args.k})
    else:
        if args.n % args.r:
            raise _InputError("--n must be divisible by --r")
        instance = analysis.two_point_instance(args.n, args.r, seed=args.seed)
        result = analysis.simulate_simple_assignment(
            instance, k=args.k, trials=args.trials, delta=args.deltas, seed=args.seed
        )
        for delta in args.deltas:
            empirical = result.exceedance[delta]
            bound = result.bound[delta]
            ok = "<=" if empirical <= bound else "EXCEEDS"
            print(f"delta={delta} empirical={empirical:.6g} {ok} bound={bound:.6g}")
            rows.append(
                {
                    "method": "simulate",
                    "k": args.k,
                    "seed": args.seed,
                    "delta": delta,
                    "empirical_exceedance": empirical,
                    "bound": bound,
                }
            )
    if args.out:
        workloads.write_results(
            args.out, rows, extra_columns=("delta", "empirical_exceedance", "bound")
        )
    return EXIT_OK


_COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "bench": cmd_bench, "analyze": cmd_analyze}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (_InputError, workloads.WorkloadFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
