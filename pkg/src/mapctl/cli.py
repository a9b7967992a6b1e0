"""Command-line front end.

Exit codes: 0 success, 1 numerical failure, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from . import repro
from .errors import MapctlError, NumericalError, StructureViolation
from .ldqbd import ThresholdPolicy, evaluate_policy
from .mapcore import (PRESET_NAMES, map_statistics, resolve_map, scale_autocorrelation)
from .mdp import optimize_thresholds
from .policies import compare_policies, results_to_csv
from .qbd import (CostParameters, base_stock_performance, optimal_base_stock,
                  solve_base_stock_system)
from .sim import SimulationConfig, simulate_system, trace_to_csv
from . import tracestats

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def _csv(header, row) -> str:
    return ",".join(header) + "\n" + ",".join(_fmt(v) for v in row) + "\n"


def _system(args):
    arrival, service = resolve_map(args.arrival), resolve_map(args.service)
    theta = getattr(args, "theta", None)
    if theta is not None:
        arrival, service = scale_autocorrelation(arrival, theta), scale_autocorrelation(service, theta)
    return repro.load_system(arrival, service, args.rho)


def _costs(args) -> CostParameters:
    return CostParameters(h=args.h, b=args.b)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_map_inspect(args) -> int:
    mp = resolve_map(args.source)
    st = map_statistics(mp, max_moment=3, max_lag=args.lags)
    if args.json:
        obj = {**mp.to_dict(), "mean": st.mean, "scv": st.scv, "rho": st.rho,
               "beta": st.beta.tolist()}
        _emit(json.dumps(obj) + "\n", args.out)
        return EXIT_OK
    lines = [f"phases  {mp.m}", f"mean    {st.mean:.6f}", f"scv     {st.scv:.6f}"]
    lines += [f"rho_{k}   {r:+.6f}" for k, r in enumerate(st.rho, start=1)]
    lines.append("beta    " + " ".join(f"{b:.6f}" for b in st.beta))
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_basestock(args) -> int:
    arrival, service = _system(args)
    costs = _costs(args)
    sol = solve_base_stock_system(arrival, service)
    s = optimal_base_stock(sol, costs)
    pm = base_stock_performance(sol, s, costs)
    if args.json:
        _emit(json.dumps({"S": s, **pm.as_dict()}) + "\n", args.out)
    else:
        _emit(_csv(["S", "TC", "EX+", "EX-", "P0"],
                   [s, pm.total_cost, pm.e_inventory, pm.e_backlog, pm.p_stockout]), args.out)
    return EXIT_OK


def cmd_optimize(args) -> int:
    arrival, service = _system(args)
    costs = _costs(args)
    if args.compare:
        _emit(results_to_csv(compare_policies(arrival, service, costs)), args.out)
        return EXIT_OK
    res = optimize_thresholds(arrival, service, costs, method=args.method)
    pm = evaluate_policy(arrival, service, res.policy, costs)
    if args.json:
        _emit(json.dumps({**res.policy.to_dict(), **pm.as_dict()}) + "\n", args.out)
    else:
        _emit(_csv(["Z", "TC", "EX+", "EX-", "P0"],
                   [str(res.policy), pm.total_cost, pm.e_inventory, pm.e_backlog,
                    pm.p_stockout]), args.out)
    return EXIT_OK


def cmd_repro(args) -> int:
    if args.id not in repro.REPRO_IDS:
        raise KeyError(f"unknown id {args.id!r}; choose from {', '.join(repro.REPRO_IDS)}")
    if args.id.startswith("fig"):
        rows = repro.reproduce_figure(args.id, jobs=args.jobs)
        summary = f"{args.id}: {len(rows)} points"
    else:
        rows = repro.reproduce_table(args.id)
        worst = max(abs(r["TC_rel_dev"]) for r in rows)
        summary = f"table {args.id}: max relative TC deviation {worst:.4%}"
    _emit(repro.rows_to_csv(rows), args.out)
    print(summary, file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    arrival, service = _system(args)
    costs = _costs(args)
    if args.policy:
        policy = ThresholdPolicy.load(args.policy)
    elif args.thresholds:
        policy = ThresholdPolicy(tuple(int(v) for v in args.thresholds.split(",")))
    else:
        policy = optimize_thresholds(arrival, service, costs).policy
    cfg = SimulationConfig(horizon=args.events + args.events // 9, warmup=args.events // 9,
                           replications=args.replications, seed=args.seed)
    est = simulate_system(arrival, service, policy, costs, cfg, trace=bool(args.trace_out),
                          jobs=args.jobs)
    if args.trace_out:
        Path(args.trace_out).write_text(trace_to_csv(est.trace), encoding="utf-8")
    header = ["Z", "TC", "TC_hw", "EX+", "EX+_hw", "EX-", "EX-_hw", "P0", "P0_hw"]
    row = [str(policy), est.total_cost, est.hw_cost, est.e_inventory, est.hw_inventory,
           est.e_backlog, est.hw_backlog, est.p_stockout, est.hw_stockout]
    if args.json:
        _emit(json.dumps(dict(zip(header, row))) + "\n", args.out)
    else:
        _emit(_csv(header, row), args.out)
    return EXIT_OK


def cmd_trace(args) -> int:
    if args.example:
        ref = resources.files("mapctl") / "data" / "synthetic_trace.csv"
        with resources.as_file(ref) as path:
            records = tracestats.parse_trace(path)
    elif args.path:
        records = tracestats.parse_trace(args.path)
    else:
        raise ValueError("give a trace file or --example")
    lots = tracestats.rows_to_csv(tracestats.lot_summary_rows(records))
    machines = tracestats.rows_to_csv(tracestats.machine_summary_rows(records))
    if args.machines_out:
        Path(args.machines_out).write_text(machines, encoding="utf-8")
        _emit(lots, args.out)
    else:
        _emit(lots + "\n" + machines, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_system(p: argparse.ArgumentParser) -> None:
    p.add_argument("--arrival", default="exp",
                   help=f"MAP JSON file or preset ({', '.join(PRESET_NAMES)})")
    p.add_argument("--service", default="exp", help="MAP JSON file or preset")
    p.add_argument("--rho", type=float, default=0.8, help="traffic intensity in (0, 1)")
    p.add_argument("--h", type=float, default=1.0, help="holding cost rate")
    p.add_argument("--b", type=float, default=5.0, help="backlog cost rate")


def _theta(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"theta must lie in [0, 1], got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mapctl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map-inspect", help="moments, scv and autocorrelations of a MAP")
    p.add_argument("source", help="MAP JSON file or preset name")
    p.add_argument("--lags", type=int, default=5)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_map_inspect)

    p = sub.add_parser("basestock", help="optimal single threshold and its measures")
    _add_system(p)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_basestock)

    p = sub.add_parser("optimize", help="optimal state-dependent thresholds")
    _add_system(p)
    p.add_argument("--theta", type=_theta, help="scale lag-1 autocorrelations by theta")
    p.add_argument("--compare", action="store_true", help="also evaluate MTNA, STWA, STNA")
    p.add_argument("--method", choices=("policy", "value"), default="policy")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("repro", help="regenerate a published table or figure series")
    p.add_argument("id", help=", ".join(repro.REPRO_IDS))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_repro)

    p = sub.add_parser("simulate", help="batch-means simulation of a threshold policy")
    _add_system(p)
    p.add_argument("--theta", type=_theta)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--policy", help="policy JSON file")
    group.add_argument("--thresholds", help="comma-separated thresholds by composite state")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--events", type=int, default=1_000_000, help="post-warmup events")
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--trace-out", help="write arrival/completion events to this CSV")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("trace", help="cycle-time and machine statistics of a lot trace")
    p.add_argument("path", nargs="?")
    p.add_argument("--example", action="store_true", help="use the bundled synthetic log")
    p.add_argument("--machines-out", help="write the per-machine table here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NumericalError, StructureViolation) as exc:
        print(f"mapctl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MapctlError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"mapctl: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
