"""Command-line entry point: plan, simulate, serve, and report subcommands.

Exit codes: 0 ok, 2 invalid input, 3 infeasible plan, 4 port busy.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import dispenser, opsvc, planner, sim, world


def _load(path: str, seed: int | None) -> world.Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise world.ParseError(f"cannot read scenario: {exc}") from None
    scenario = world.load_scenario(text)
    if seed is not None:
        scenario = world.load_scenario(
            json.dumps({**json.loads(world.serialize_scenario(scenario)), "seed": seed}))
    return scenario


def _first_aircraft_plan(scenario: world.Scenario) -> planner.FlightPlan:
    accepted, _ = dispenser.screen_batch(list(scenario.articles))
    grid = dispenser.CompartmentGrid(scenario.fleet[0].rows, scenario.fleet[0].cols)
    assignment = dispenser.assign_articles(accepted, grid)
    placed = {p.article_id for p in assignment.placements}
    by_dest: dict[str, list[str]] = {}
    for art in accepted:
        if art.id in placed:
            by_dest.setdefault(art.destination, []).append(art.id)
    destinations = [(scenario.address(d), ids) for d, ids in sorted(by_dest.items())]
    return planner.build_flight_plan(scenario.base, destinations, scenario.params)


def cmd_plan(args) -> int:
    scenario = _load(args.scenario, args.seed)
    try:
        plan = _first_aircraft_plan(scenario)
    except planner.InfeasibleLeg as exc:
        print(f"infeasible_leg: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(plan.to_json_dict()))
    return 0


def cmd_simulate(args) -> int:
    scenario = _load(args.scenario, args.seed)
    try:
        lines, report = sim.run(scenario, seed_override=args.seed)
    except planner.InfeasibleLeg as exc:
        print(f"infeasible_leg: {exc}", file=sys.stderr)
        return 3
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    print(json.dumps(report.to_json_dict()))
    return 0


def cmd_serve(args) -> int:
    scenario = _load(args.scenario, args.seed)
    engine = sim.Engine(scenario, seed_override=args.seed)
    try:
        report = opsvc.serve(engine, args.port, args.pace)
    except OSError as exc:
        print(f"port {args.port} unavailable: {exc}", file=sys.stderr)
        return 4
    except KeyboardInterrupt:
        report = engine.report
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(engine.log_lines()) + "\n")
    print(json.dumps(report.to_json_dict()))
    return 0


def cmd_report(args) -> int:
    try:
        with open(args.scenario, encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln]
    except OSError as exc:
        print(f"cannot read log: {exc}", file=sys.stderr)
        return 2
    drops, requeues, report = [], {}, None
    for line in lines:
        rec = json.loads(line)
        if rec.get("record") == "drop":
            drops.append(rec)
        elif rec.get("record") == "requeue":
            requeues[rec["stop"]] = requeues.get(rec["stop"], 0) + 1
        elif rec.get("record") == "report":
            report = rec
    print(f"{'article':<12} {'stop':<14} {'t_s':>10} {'offset_m':>9}")
    for d in drops:
        print(f"{d['article']:<12} {d['stop']:<14} {d['t']:>10.1f} {d['offset_m']:>9.2f}")
    if requeues:
        print("\nretries:")
        for stop, n in sorted(requeues.items()):
            print(f"  {stop}: {n}")
    if report:
        print("\nenergy per aircraft (J):")
        for craft, e in report.get("energy_used_j", {}).items():
            print(f"  {craft}: {e:.0f}")
        print(f"undelivered: {len(report.get('undelivered', []))}, "
              f"makespan: {report.get('makespan_s', 0):.1f} s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skydrop")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, fn in (("plan", cmd_plan), ("simulate", cmd_simulate),
                     ("serve", cmd_serve), ("report", cmd_report)):
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True,
                       help="scenario JSON path (for `report`: an event log path)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--port", type=int, default=8787)
        p.add_argument("--pace", type=float, default=1.0)
        p.set_defaults(fn=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.pace <= 0:
        print("pace must be > 0", file=sys.stderr)
        return 2
    if not 1024 <= args.port <= 65535:
        print("port must be in [1024, 65535]", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except (world.ParseError, world.ValidationError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
