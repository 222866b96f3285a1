"""Command-line entry point: solve, batch, validate, export-mps, inspect-graph."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .builder import build
from .feeder import Feeder, FeederError, derive_post_outage, load_feeder, load_scenario, scenario_from_dict
from .graph import BudgetExceeded, energized_components, enumerate_bs_paths, enumerate_cycles, enumerate_nbs_paths
from .harness import BatchAborted, BatchSpec, dump_replay, restored_load_pct, run_batch
from .ieee37 import builtin_ieee37
from .solver.bnb import solve_milp
from .solver.mps import MpsNameError, export_mps
from .validator import PlanError, extract_plan, load_plan, validate

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_INVALID = 0, 1, 2, 3, 4, 5
WORKERS_ENV = "DSRMILP_WORKERS"


class UsageError(Exception):
    pass


# -- argument helpers ------------------------------------------------------

def _feeder_args(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin-ieee37", action="store_true", help="use the packaged IEEE-37 feeder")
    src.add_argument("--feeder", type=Path, help="feeder JSON file")


def _scenario_args(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--fail", default="", help="comma-separated failed edges (ids or from-to labels)")
    g.add_argument("--scenario", type=Path, help="scenario JSON file")


def _model_args(p: argparse.ArgumentParser):
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="switching penalty")
    p.add_argument("--tight", action="store_true", help="use flows directly in the drop rows")


def _solver_args(p: argparse.ArgumentParser):
    p.add_argument("--gap-tol", type=float, default=1e-6)
    p.add_argument("--time-limit", type=float, default=300.0)
    p.add_argument("--node-limit", type=int, default=None)


def _load_feeder(args) -> Feeder:
    if args.builtin_ieee37:
        return builtin_ieee37()
    try:
        return load_feeder(args.feeder.read_text())
    except OSError as exc:
        raise UsageError(f"cannot read feeder: {exc}") from exc


def _resolve_edge(feeder: Feeder, token: str) -> int:
    token = token.strip()
    for e in feeder.edges:
        if e.name and e.name == token:
            return e.id
    if "-" in token:
        a, b = token.rsplit("-", 1) if token.count("-") == 1 else token.split("-", 1)
        try:
            return feeder.edge_between(a, b).id
        except KeyError:
            pass
    try:
        eid = int(token)
    except ValueError:
        raise UsageError(f"unknown edge {token!r}") from None
    if not 0 <= eid < feeder.n_edges:
        raise UsageError(f"edge id {eid} out of range")
    return eid


def _load_scenario(args, feeder: Feeder):
    if getattr(args, "scenario", None):
        try:
            return load_scenario(feeder, args.scenario.read_text())
        except OSError as exc:
            raise UsageError(f"cannot read scenario: {exc}") from exc
    failed = [_resolve_edge(feeder, t) for t in args.fail.split(",") if t.strip()] \
        if getattr(args, "fail", "") else []
    return derive_post_outage(feeder, failed)


def _graph(feeder: Feeder):
    return enumerate_cycles(feeder), enumerate_nbs_paths(feeder), enumerate_bs_paths(feeder)


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


# -- subcommands -----------------------------------------------------------

def cmd_solve(args) -> int:
    feeder = _load_feeder(args)
    scenario = _load_scenario(args, feeder)
    lam = feeder.lam if args.lam is None else args.lam
    model = build(feeder, scenario, *_graph(feeder), lam=lam, tight=args.tight)
    if args.dump_model:
        Path(args.dump_model).write_text(model.dump())
    report = solve_milp(model, gap_tol=args.gap_tol, time_limit=args.time_limit,
                        node_limit=args.node_limit)
    doc = {"feeder": feeder.name, "scenario": scenario.to_dict(), "lambda": lam,
           "report": report.to_dict()}
    if not report.has_solution:
        if args.json:
            _emit(doc)
        else:
            print(f"status: {report.status} (no plan)")
        return EXIT_INFEASIBLE if report.status == "infeasible" else EXIT_LIMIT
    plan = extract_plan(feeder, scenario, model, report.values, report.objective, lam)
    check = validate(feeder, scenario, plan)
    islands = energized_components(feeder, plan.x, plan.y)
    changes = [feeder.edges[k].label for k in feeder.switches if plan.y[k] != scenario.y0[k]]
    summary = {
        "status": report.status,
        "objective": report.objective,
        "restored_pct": restored_load_pct(feeder, scenario, plan),
        "islands": [[feeder.buses[i].label for i in isl] for isl in islands],
        "switch_changes": changes,
        "pv_buses": sorted(feeder.buses[i].label for i, m in plan.modes.items() if m == "PV"),
        "taps": {feeder.edges[r].label: t for r, t in sorted(plan.taps.items())},
        "dead_buses": [feeder.buses[i].label for i in range(feeder.n_buses) if not plan.x[i]],
        "nodes": report.nodes,
        "wall_time": report.wall_time,
        "valid": check.passed,
    }
    doc.update(summary=summary, plan=plan.to_dict(), validation=check.to_dict())
    if args.plan_out:
        Path(args.plan_out).write_text(json.dumps(doc, indent=2, sort_keys=True))
    if args.json:
        _emit(doc)
    else:
        print(f"status: {report.status}  objective: {report.objective:.6f}  "
              f"nodes: {report.nodes}  time: {report.wall_time:.3f}s")
        print(f"restored: {summary['restored_pct']:.3f}%")
        print(f"islands: {len(islands)}")
        for isl in summary["islands"]:
            print("  " + " ".join(isl))
        print("switch changes: " + (", ".join(changes) if changes else "none"))
        print("PV buses: " + (", ".join(summary["pv_buses"]) or "none"))
        print("taps: " + (", ".join(f"{k}={t}" for k, t in summary["taps"].items()) or "none"))
        print("de-energized: " + (" ".join(summary["dead_buses"]) or "none"))
        print(f"validation: {'pass' if check.passed else 'FAIL'}")
        for v in check.violations:
            print(f"  {v}")
    if not check.passed:
        return EXIT_INVALID
    return EXIT_OK if report.status == "optimal" else EXIT_LIMIT


def cmd_validate(args) -> int:
    feeder = _load_feeder(args)
    try:
        plan, doc = load_plan(args.plan)
    except OSError as exc:
        raise UsageError(f"cannot read plan: {exc}") from exc
    if args.scenario or args.fail:
        scenario = _load_scenario(args, feeder)
    elif "scenario" in doc:
        scenario = scenario_from_dict(feeder, doc["scenario"])
    else:
        raise UsageError("plan file carries no scenario; pass --scenario or --fail")
    check = validate(feeder, scenario, plan, tol=args.tol)
    if args.json:
        _emit(check.to_dict())
    else:
        print("pass" if check.passed else "FAIL")
        for v in check.violations:
            print(f"  {v}")
    return EXIT_OK if check.passed else EXIT_INVALID


def cmd_export_mps(args) -> int:
    feeder = _load_feeder(args)
    scenario = _load_scenario(args, feeder)
    model = build(feeder, scenario, *_graph(feeder), lam=args.lam, tight=args.tight)
    text = export_mps(model)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_inspect_graph(args) -> int:
    feeder = _load_feeder(args)
    cycles, nbs, bs = _graph(feeder)
    if args.json:
        _emit({"cycles": [c.to_dict() for c in cycles], "nbs_paths": [p.to_dict() for p in nbs],
               "bs_paths": [p.to_dict() for p in bs]})
        return EXIT_OK
    label = lambda i: feeder.buses[i].label  # noqa: E731
    for title, items in (("cycles", cycles), ("nbs-paths", nbs), ("bs-paths", bs)):
        print(f"{title}: {len(items)}")
        for it in items:
            ends = f" {label(it.source)}->{label(it.target)}" if it.endpoints else ""
            print(f"  {' '.join(map(str, it.sequence))}{ends}")
    return EXIT_OK


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{WORKERS_ENV}={raw!r} is not an integer") from None


def cmd_batch(args) -> int:
    feeder = _load_feeder(args)
    workers = args.workers if args.workers is not None else _default_workers()
    try:
        spec = BatchSpec(feeder, k_values=args.k, n_per_k=args.n_per_k, seed=args.seed, lam=args.lam,
                         gap_tol=args.gap_tol, time_limit=args.time_limit, node_limit=args.node_limit,
                         tight=args.tight, widen_eligibility=args.widen, workers=workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        result = run_batch(spec)
    except BatchAborted as exc:
        print(f"batch aborted: {exc}", file=sys.stderr)
        print(dump_replay(exc), file=sys.stderr)
        return EXIT_INVALID
    records = result.records_csv(args.mask_timing)
    aggregates = result.aggregates_csv(args.mask_timing)
    if args.records:
        Path(args.records).write_text(records)
    if args.aggregates:
        Path(args.aggregates).write_text(aggregates)
    if args.json:
        _emit({"aggregates": result.aggregates})
    else:
        sys.stdout.write(aggregates)
    if any(r.status in ("time_limit", "node_limit", "gap_limit") for r in result.records):
        return EXIT_LIMIT
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsrmilp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one restoration scenario")
    _feeder_args(p)
    _scenario_args(p)
    _model_args(p)
    _solver_args(p)
    p.add_argument("--json", action="store_true")
    p.add_argument("--plan-out", help="write plan JSON here")
    p.add_argument("--dump-model", help="write a tagged constraint listing here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("batch", help="run a seeded random-outage batch")
    _feeder_args(p)
    _model_args(p)
    _solver_args(p)
    p.add_argument("--k", type=_int_list, default=(1, 2, 3, 4, 5), help="outage sizes, e.g. 1,2,3")
    p.add_argument("--n-per-k", type=int, default=200)
    p.add_argument("--seed", type=int, default=2019)
    p.add_argument("--workers", type=int, default=None, help=f"default from ${WORKERS_ENV} or 1")
    p.add_argument("--widen", action="store_true", help="let switches and regulators fail too")
    p.add_argument("--records", help="per-scenario CSV path")
    p.add_argument("--aggregates", help="per-k CSV path")
    p.add_argument("--mask-timing", action="store_true", help="write wall times as NA")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("validate", help="check a plan JSON against the feeder")
    p.add_argument("plan", type=Path)
    _feeder_args(p)
    _scenario_args(p)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("export-mps", help="write the scenario MILP in MPS format")
    _feeder_args(p)
    _scenario_args(p)
    _model_args(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_export_mps)

    p = sub.add_parser("inspect-graph", help="list cycles and coordination paths")
    _feeder_args(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect_graph)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FeederError, PlanError, BudgetExceeded, MpsNameError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
