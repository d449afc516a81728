"""Command line: python -m app.cli {gen,solve,simulate,bench,lp-export}"""
import argparse
import json
import logging
import sys
from pathlib import Path

from app.core.bench_engine import RunConfig, bench_engine
from app.core.circuit import RoundingParams
from app.core.config import configure_logging, settings
from app.core.errors import CoflowError
from app.core.generator import GenParams, gen_instance
from app.core.lp import (build_circuit_given_paths_lp, build_circuit_routing_lp, build_packet_lp, lp_horizon,
                         make_grid)
from app.core.lp_format import export_lp
from app.core.model import add_dummy_flows
from app.core.packet import default_packet_horizon
from app.core.pipeline import run_pipeline
from app.core.schemes import SCHEMES, compare, run_scheme
from app.core.storage import (allocation_rows, coflow_rows, congestion_rows, load_instance, save_instance,
                              save_report, save_schedule, write_rows)

logger = logging.getLogger("app.cli")


def _params(args) -> RoundingParams:
    overrides = {"alpha": args.alpha, "displacement": args.disp, "epsilon": args.epsilon}
    return RoundingParams(seed=args.seed, strict=args.strict, **{k: v for k, v in overrides.items() if v is not None})


def cmd_gen(args) -> int:
    params = GenParams(fat_tree_k=args.k, network_file=args.network, coflows=args.coflows, width=args.width,
                       size_mean=args.size_mean, release_mean=args.release_mean, weight_mean=args.weight_mean,
                       mode=args.mode or "paths-free", seed=args.seed)
    instance = gen_instance(params)
    target = save_instance(instance, args.out or Path(settings.OUTPUT_DIR) / f"instance_{args.seed}.json")
    print(f"wrote {len(instance.real_flows())} flows to {target}")
    return 0


def cmd_solve(args) -> int:
    instance = load_instance(args.instance)
    out = Path(args.out or settings.OUTPUT_DIR)
    result = run_pipeline(instance, args.mode, _params(args), seed=args.seed, given_paths=args.given_paths,
                          use_lp=not args.no_lp, horizon=args.horizon, lp_dump=args.lp_dump)
    save_report(result.report, out / "report.json")
    write_rows(coflow_rows(instance, result.report), out / "report.csv",
               columns=["coflow", "weight", "completion", "weighted_completion"])
    if result.congestion is not None:
        write_rows(congestion_rows(result.congestion), out / "congestion.csv",
                   columns=["item", "name", "load", "capacity", "congestion", "paths"])
    if result.schedule is not None:
        save_schedule(result.schedule, out / "schedule.json")
        write_rows(allocation_rows(result.schedule), out / "allocations.csv",
                   columns=["flow", "path", "start", "end", "rate"])
    if result.packets is not None:
        write_rows(result.packets.rows(), out / "trace.csv", columns=["packet", "step", "location"])
    summary = {"mode": result.mode, "objective": result.report.objective, "feasible": result.report.feasible,
               "lp_objective": result.report.lp_objective, "stretch": result.report.stretch}
    print(json.dumps(summary, indent=2))
    return 0 if result.report.feasible else 1


def cmd_simulate(args) -> int:
    instance = load_instance(args.instance)
    schemes = [args.scheme] if args.scheme != "all" else list(SCHEMES)
    reports = {}
    for scheme in schemes:
        _, report = run_scheme(instance, scheme, args.seed)
        reports[scheme] = report
        print(f"{scheme:>14}: objective {report.objective:.6g}  makespan {report.makespan:.6g}")
    if "lp-based" in reports and len(reports) > 1:
        out = Path(args.out or settings.OUTPUT_DIR)
        out.mkdir(parents=True, exist_ok=True)
        table = compare(reports, out=str(out / "compare.csv"))
        print(table.to_string(index=False))
    return 0


def cmd_bench(args) -> int:
    config = RunConfig(sweep=args.sweep, values=args.values or ([4, 8, 16, 32] if args.sweep == "width"
                                                                else [10, 15, 20, 25]),
                       coflows=args.coflows, width=args.width, fat_tree_k=args.k, repetitions=args.reps,
                       seed=args.seed, output_dir=args.out or settings.OUTPUT_DIR)
    result = bench_engine.run_bench(config)
    if args.save:
        print(f"saved as run {bench_engine.save_results(result)}")
    for row in result["summary"]:
        print(row)
    return 0 if not result["failures"] else 1


def cmd_lp_export(args) -> int:
    instance = add_dummy_flows(load_instance(args.instance))
    mode = args.mode or instance.mode
    if mode == "packet":
        horizon = args.horizon or min(default_packet_horizon(instance), settings.PACKET_HORIZON_CAP)
        problem = build_packet_lp(instance, make_grid("packet", 1.0, horizon), horizon,
                                  restrict_to_paths=args.given_paths)
    elif mode == "paths-given":
        eps = _params(args).epsilon
        problem = build_circuit_given_paths_lp(instance, make_grid("circuit", eps, lp_horizon(instance, eps)))
    else:
        problem = build_circuit_routing_lp(instance, make_grid("circuit", 1.0, lp_horizon(instance, 1.0)))
    target = export_lp(problem, args.out or Path(settings.OUTPUT_DIR) / f"{problem.name}.lp")
    print(f"wrote {problem.n_vars} columns, {problem.n_rows} rows to {target}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coflow", description="Coflow routing and scheduling")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--mode", choices=["paths-given", "paths-free", "packet"])
    common.add_argument("--alpha", type=float)
    common.add_argument("--disp", type=int)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--strict", action="store_true", help="reject parameters failing the capacity inequality")
    common.add_argument("--out")
    common.add_argument("--log", help="log level (default: COFLOW_LOG)")
    common.add_argument("--horizon-cap", type=int, help="cap on the time-expanded horizon")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="generate a random instance")
    gen.add_argument("--coflows", type=int, default=10)
    gen.add_argument("--width", type=int, default=4)
    gen.add_argument("--k", type=int, default=settings.GEN_FAT_TREE_K)
    gen.add_argument("--network", help="network JSON instead of a fat tree")
    gen.add_argument("--size-mean", type=float, default=settings.GEN_SIZE_MEAN)
    gen.add_argument("--release-mean", type=float, default=settings.GEN_RELEASE_MEAN)
    gen.add_argument("--weight-mean", type=float, default=settings.GEN_WEIGHT_MEAN)
    gen.set_defaults(func=cmd_gen)

    solve = sub.add_parser("solve", parents=[common], help="run the LP-based pipeline on an instance")
    solve.add_argument("instance")
    solve.add_argument("--given-paths", action="store_true")
    solve.add_argument("--no-lp", action="store_true", help="packet given paths: order by length over weight")
    solve.add_argument("--horizon", type=int)
    solve.add_argument("--lp-dump")
    solve.set_defaults(func=cmd_solve)

    simulate = sub.add_parser("simulate", parents=[common], help="simulate comparison schemes")
    simulate.add_argument("instance")
    simulate.add_argument("--scheme", choices=sorted(SCHEMES) + ["all"], default="all")
    simulate.set_defaults(func=cmd_simulate)

    bench = sub.add_parser("bench", parents=[common], help="sweep coflow count or width")
    bench.add_argument("--sweep", choices=["coflows", "width"], default="coflows")
    bench.add_argument("--values", type=int, nargs="+")
    bench.add_argument("--coflows", type=int, default=10)
    bench.add_argument("--width", type=int, default=4)
    bench.add_argument("--k", type=int, default=settings.GEN_FAT_TREE_K)
    bench.add_argument("--reps", type=int, default=10)
    bench.add_argument("--save", action="store_true", help="store the run in the bench database")
    bench.set_defaults(func=cmd_bench)

    lp = sub.add_parser("lp-export", parents=[common], help="write the LP of an instance in LP format")
    lp.add_argument("instance")
    lp.add_argument("--given-paths", action="store_true")
    lp.add_argument("--horizon", type=int)
    lp.set_defaults(func=cmd_lp_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log)
    if args.horizon_cap is not None:
        settings.PACKET_HORIZON_CAP = args.horizon_cap
    try:
        return args.func(args)
    except (CoflowError, ValueError) as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
