"""Command line front end.

Exit codes: 0 success (and feasible/solved outcomes), 1 negative verdicts on
well-formed input (solution fails verification, solver proves infeasibility
or finds nothing within budget, mapped events fail verification), 2 usage
and parse errors (unreadable files, malformed documents, invalid instance
structure, bad generator specs, incomplete or non-integral assignments),
3 unexpected internal failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import fileformat, generate, milp, solve
from .core import (
    Instance,
    conflict_pairs,
    time_horizon,
    total_operations,
)
from .verify import Violation, verify

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3


class _Fail(Exception):
    """Terminate the subcommand with a message and exit code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return handle.read()
    except OSError as e:
        raise _Fail(EXIT_USAGE, f"cannot read {path}: {e.strerror or e}") from e


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
    except OSError as e:
        raise _Fail(EXIT_USAGE, f"cannot write {path}: {e.strerror or e}") from e


def _emit_json(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _load_instance(path: str, strict: bool = False
                   ) -> tuple[Instance, fileformat.ParseDiagnostics]:
    try:
        return fileformat.parse_instance(_read_text(path), strict=strict)
    except fileformat.FormatError as e:
        raise _Fail(EXIT_USAGE, f"invalid instance ({e.kind}) {e}") from e


def _print_warnings(diags: fileformat.ParseDiagnostics) -> None:
    for path, message in diags.warnings:
        print(f"warning: {path}: {message}", file=sys.stderr)


def _resource_count(instance: Instance) -> int:
    return len({usage.resource
                for train in instance.trains
                for op in train.operations for usage in op.resources})


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        instance, diags = fileformat.parse_instance(_read_text(args.instance),
                                                    strict=args.strict)
    except fileformat.FormatError as e:
        if args.json:
            _emit_json({"valid": False,
                        "error": {"kind": e.kind, "path": e.path or "/",
                                  "reason": e.reason}})
        else:
            print(f"invalid ({e.kind}) {e}", file=sys.stderr)
        return EXIT_USAGE
    summary = {
        "valid": True,
        "trains": len(instance.trains),
        "operations": total_operations(instance),
        "resources": _resource_count(instance),
        "objective_components": len(instance.objective),
    }
    if args.json:
        summary["warnings"] = [{"path": p, "message": m}
                               for p, m in diags.warnings]
        _emit_json(summary)
    else:
        _print_warnings(diags)
        print(f"valid: {summary['trains']} trains, "
              f"{summary['operations']} operations, "
              f"{summary['resources']} resources, "
              f"{summary['objective_components']} objective components")
    return EXIT_OK


def _cmd_stats(args: argparse.Namespace) -> int:
    instance, diags = _load_instance(args.instance)
    _print_warnings(diags)
    arcs = sum(len(op.successors)
               for train in instance.trains for op in train.operations)
    stats = {
        "trains": len(instance.trains),
        "operations": total_operations(instance),
        "arcs": arcs,
        "resources": _resource_count(instance),
        "conflict_pairs": len(conflict_pairs(instance)),
        "objective_components": len(instance.objective),
        "time_horizon": time_horizon(instance),
    }
    if args.json:
        _emit_json(stats)
    else:
        for key, value in stats.items():
            print(f"{key}: {value}")
    return EXIT_OK


def _violation_doc(v: Violation) -> dict:
    doc = {"kind": v.kind, "detail": v.detail}
    for key in ("event", "train", "resource", "other_event", "claimed", "computed"):
        value = getattr(v, key)
        if value is not None:
            doc[key] = value
    return doc


def _cmd_verify(args: argparse.Namespace) -> int:
    instance, inst_diags = _load_instance(args.instance, strict=args.strict)
    try:
        solution, sol_diags = fileformat.parse_solution(_read_text(args.solution),
                                                        strict=args.strict)
    except fileformat.FormatError as e:
        raise _Fail(EXIT_USAGE, f"invalid solution ({e.kind}) {e}") from e
    if not args.json:
        _print_warnings(inst_diags)
        _print_warnings(sol_diags)
    verdict = verify(instance, solution)
    if args.json:
        _emit_json({"feasible": verdict.feasible,
                    "objective": verdict.computed_objective,
                    "violations": [_violation_doc(v) for v in verdict.violations]})
    elif verdict.feasible:
        print(f"feasible, objective {verdict.computed_objective}")
    else:
        for v in verdict.violations:
            print(f"violation ({v.kind}): {v.detail}")
        print(f"infeasible: {len(verdict.violations)} violation(s)")
    return EXIT_OK if verdict.feasible else EXIT_NEGATIVE


def _thread_count(args: argparse.Namespace) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("DISPLIB_THREADS", "")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            print(f"warning: ignoring DISPLIB_THREADS={env!r}", file=sys.stderr)
    return 1


def _cmd_solve(args: argparse.Namespace) -> int:
    instance, diags = _load_instance(args.instance)
    if not args.json:
        _print_warnings(diags)
    mode = args.mode
    if mode == "auto":
        small = total_operations(instance) <= 60 and len(instance.trains) <= 6
        mode = "exact" if small else "heuristic"
    if mode == "exact":
        report = solve.solve_exact(instance,
                                   node_limit=args.node_limit,
                                   time_limit=args.time_limit,
                                   threads=_thread_count(args))
    else:
        report = solve.solve_heuristic(instance,
                                       time_limit=args.time_limit,
                                       seed=args.seed,
                                       max_restarts=args.max_restarts,
                                       backtrack_limit=args.backtrack_limit)
    payload = {
        "status": report.status.value,
        "mode": mode,
        "nodes": report.nodes,
        "wall_time": round(report.wall_time, 3),
    }
    if report.bound is not None:
        payload["bound"] = report.bound
    if report.solution is None:
        if args.json:
            _emit_json(payload)
        else:
            print(f"{report.status.value}: no solution "
                  f"({report.nodes} nodes, {report.wall_time:.2f}s)",
                  file=sys.stderr)
        return EXIT_NEGATIVE
    payload["objective"] = report.solution.objective_value
    text = fileformat.write_solution(report.solution)
    if args.json:
        payload["solution"] = json.loads(text)
        _emit_json(payload)
        if args.output != "-":
            _write_text(args.output, text)
    else:
        _write_text(args.output, text)
        print(f"{report.status.value}: objective {report.solution.objective_value} "
              f"({mode}, {report.nodes} nodes, {report.wall_time:.2f}s)",
              file=sys.stderr)
    return EXIT_OK


def _cmd_emit_lp(args: argparse.Namespace) -> int:
    instance, diags = _load_instance(args.instance)
    _print_warnings(diags)
    options = milp.ModelOptions(reference_objective=args.reference_objective,
                                relaxed_bounds=args.relaxed_bounds)
    model = milp.build_model(instance, options)
    _write_text(args.output, milp.emit_lp(model))
    map_path = args.name_map
    if map_path is None and args.output != "-":
        map_path = args.output + ".names.json"
    if map_path is not None:
        _write_text(map_path, json.dumps(milp.name_map(model), indent=2) + "\n")
    print(f"model: {len(model.variables)} variables, {len(model.rows)} rows, "
          f"horizon {model.horizon}", file=sys.stderr)
    return EXIT_OK


def _cmd_map_solution(args: argparse.Namespace) -> int:
    instance, diags = _load_instance(args.instance)
    if not args.json:
        _print_warnings(diags)
    try:
        sidecar = json.loads(_read_text(args.name_map))
    except json.JSONDecodeError as e:
        raise _Fail(EXIT_USAGE, f"name map is not valid JSON: {e}") from e
    if not isinstance(sidecar, dict) \
            or sidecar.get("format") != "displib-lp-name-map":
        raise _Fail(EXIT_USAGE, f"{args.name_map} is not a name map file")
    raw_options = sidecar.get("options", {})
    options = milp.ModelOptions(
        reference_objective=bool(raw_options.get("reference_objective", False)),
        relaxed_bounds=bool(raw_options.get("relaxed_bounds", False)))
    model = milp.build_model(instance, options)
    recorded = sidecar.get("variables", {})
    if set(recorded) != {v.name for v in model.variables}:
        raise _Fail(EXIT_USAGE,
                    "name map does not match this instance (was it emitted "
                    "for a different file?)")
    try:
        assignment = milp.parse_assignment(_read_text(args.assignment))
    except ValueError as e:
        raise _Fail(EXIT_USAGE, f"bad assignment: {e}") from e
    try:
        solution = milp.map_solution(model, assignment, instance)
    except milp.MappingError as e:
        code = (EXIT_NEGATIVE if e.kind == milp.FAILED_VERIFICATION
                else EXIT_USAGE)
        if args.json:
            doc = {"mapped": False, "kind": e.kind, "reason": str(e)}
            if e.verdict is not None:
                doc["violations"] = [_violation_doc(v)
                                     for v in e.verdict.violations]
            _emit_json(doc)
        else:
            print(f"mapping failed ({e.kind}): {e}", file=sys.stderr)
        return code
    text = fileformat.write_solution(solution)
    if args.json:
        _emit_json({"mapped": True,
                    "objective": solution.objective_value,
                    "solution": json.loads(text)})
        if args.output != "-":
            _write_text(args.output, text)
    else:
        _write_text(args.output, text)
        print(f"mapped: objective {solution.objective_value}", file=sys.stderr)
    return EXIT_OK


_PATTERN_KEYS = {
    "join": ("first", "second"),
    "cancellation": ("train", "station", "penalty"),
    "correspondence": ("feeder", "connecting", "station"),
}

_LINE_FLAGS = ("num_stations", "tracks_per_station", "num_trains",
               "up_fraction", "headway", "cost_shape", "seed")


def _spec_from_config(cls, obj: dict, where: str):
    if not isinstance(obj, dict):
        raise _Fail(EXIT_USAGE, f"config: {where} must be an object")
    fields = {f.name for f in dataclasses.fields(cls)}
    values = {}
    for key, raw in obj.items():
        if key not in fields:
            raise _Fail(EXIT_USAGE, f"config: unknown key {key!r} in {where}")
        values[key] = tuple(raw) if isinstance(raw, list) else raw
    try:
        return cls(**values)
    except TypeError as e:
        raise _Fail(EXIT_USAGE, f"config: bad {where}: {e}") from e


def _apply_pattern(line: generate.GeneratedLine, raw: dict,
                   index: int) -> generate.GeneratedLine:
    where = f"patterns[{index}]"
    if not isinstance(raw, dict) or "type" not in raw:
        raise _Fail(EXIT_USAGE, f"config: {where} needs a \"type\" key")
    kind = raw["type"]
    if kind not in _PATTERN_KEYS:
        raise _Fail(EXIT_USAGE, f"config: {where}: unknown pattern type {kind!r}")
    wanted = _PATTERN_KEYS[kind]
    for key in raw:
        if key != "type" and key not in wanted:
            raise _Fail(EXIT_USAGE, f"config: {where}: unknown key {key!r}")
    missing = [key for key in wanted if key not in raw]
    if missing:
        raise _Fail(EXIT_USAGE, f"config: {where}: missing {', '.join(missing)}")
    values = [raw[key] for key in wanted]
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in values):
        raise _Fail(EXIT_USAGE, f"config: {where}: all pattern fields are integers")
    if kind == "join":
        return generate.join_trains(line, *values)
    if kind == "cancellation":
        return generate.add_cancellation(line, *values)
    return generate.add_correspondence(line, *values)


def _generate_one(config: dict, args: argparse.Namespace,
                  offset: int) -> generate.GeneratedLine:
    line_cfg = dict(config.get("line", {}))
    for flag in _LINE_FLAGS:
        value = getattr(args, flag)
        if value is not None:
            line_cfg[flag] = value
    line_cfg["seed"] = line_cfg.get("seed", 0) + offset
    spec = _spec_from_config(generate.LineSpec, line_cfg, "line")
    try:
        line = generate.generate_line(spec)
        for index, raw in enumerate(config.get("patterns", ())):
            line = _apply_pattern(line, raw, index)
        if "perturb" in config:
            perturb_cfg = dict(config["perturb"])
            perturb_cfg["seed"] = perturb_cfg.get("seed", 0) + offset
            pspec = _spec_from_config(generate.PerturbSpec, perturb_cfg, "perturb")
            line = generate.perturb(line, pspec)
    except (generate.SpecInfeasible, generate.PatternConflict) as e:
        raise _Fail(EXIT_USAGE, f"cannot generate: {e}") from e
    return line


def _cmd_generate(args: argparse.Namespace) -> int:
    if args.config is not None:
        try:
            config = json.loads(_read_text(args.config))
        except json.JSONDecodeError as e:
            raise _Fail(EXIT_USAGE, f"config is not valid JSON: {e}") from e
        if not isinstance(config, dict):
            raise _Fail(EXIT_USAGE, "config must be a JSON object")
        for key in config:
            if key not in ("line", "perturb", "patterns"):
                raise _Fail(EXIT_USAGE, f"config: unknown key {key!r}")
        if not isinstance(config.get("patterns", []), list):
            raise _Fail(EXIT_USAGE, "config: patterns must be an array")
    else:
        config = {"line": {}}
    if args.count is not None and args.count < 0:
        raise _Fail(EXIT_USAGE, "--count must be non-negative")
    if args.out_dir is not None:
        count = 1 if args.count is None else args.count
        try:
            os.makedirs(args.out_dir, exist_ok=True)
        except OSError as e:
            raise _Fail(EXIT_USAGE, f"cannot create {args.out_dir}: {e}") from e
        for offset in range(count):
            line = _generate_one(config, args, offset)
            path = os.path.join(args.out_dir, f"instance_{offset:04d}.json")
            _write_text(path, fileformat.write_instance(line.instance))
            print(f"wrote {path}", file=sys.stderr)
        return EXIT_OK
    if args.count is not None and args.count != 1:
        raise _Fail(EXIT_USAGE, "--count needs --out-dir to name the files")
    line = _generate_one(config, args, 0)
    _write_text(args.output, fileformat.write_instance(line.instance))
    print(f"generated: {len(line.instance.trains)} trains, "
          f"{total_operations(line.instance)} operations, "
          f"{len(line.instance.objective)} objective components",
          file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _add_json_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--json", action="store_true",
                        help="machine-readable JSON on stdout")


def _add_output_flag(parser: argparse.ArgumentParser, what: str) -> None:
    parser.add_argument("-o", "--out", "--output", dest="output", default="-",
                        metavar="PATH", help=f"{what} (default: stdout)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="displib",
        description="Toolkit for the train dispatching problem: validate and "
                    "generate instances, verify and search for solutions, "
                    "emit solver-ready LP files.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an instance file")
    p.add_argument("instance", help="instance JSON file, or - for stdin")
    p.add_argument("--strict", action="store_true",
                   help="reject unknown keys instead of warning")
    _add_json_flag(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("stats", help="print instance size figures")
    p.add_argument("instance", help="instance JSON file, or - for stdin")
    _add_json_flag(p)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("verify", help="check a solution against an instance")
    p.add_argument("instance", help="instance JSON file, or - for stdin")
    p.add_argument("solution", help="solution JSON file, or - for stdin")
    p.add_argument("--strict", action="store_true",
                   help="reject unknown keys instead of warning")
    _add_json_flag(p)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("solve", help="search for a good solution")
    p.add_argument("instance", help="instance JSON file, or - for stdin")
    _add_output_flag(p, "solution file")
    p.add_argument("--mode", choices=("auto", "exact", "heuristic"),
                   default="auto",
                   help="auto picks exact for small instances (default)")
    p.add_argument("--time-limit", type=float, default=None, metavar="SECONDS")
    p.add_argument("--node-limit", type=int, default=None, metavar="N",
                   help="exact search node budget")
    p.add_argument("--seed", type=int, default=0, help="heuristic seed")
    p.add_argument("--max-restarts", type=int, default=None, metavar="N",
                   help="heuristic restart budget")
    p.add_argument("--backtrack-limit", type=int, default=256, metavar="N",
                   help="heuristic backtracks per restart")
    p.add_argument("--threads", type=int, default=None,
                   help="exact search threads (or DISPLIB_THREADS)")
    _add_json_flag(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("emit-lp", help="write the model as an LP file")
    p.add_argument("instance", help="instance JSON file, or - for stdin")
    _add_output_flag(p, "LP file")
    p.add_argument("--name-map", default=None, metavar="PATH",
                   help="variable name map JSON (default: OUT.names.json "
                        "when writing to a file)")
    p.add_argument("--reference-objective", action="store_true",
                   help="classic ungated delay-cost rows")
    p.add_argument("--relaxed-bounds", action="store_true",
                   help="start upper bounds only bind selected operations")
    p.set_defaults(func=_cmd_emit_lp)

    p = sub.add_parser("map-solution",
                       help="turn a solver variable assignment into a solution")
    p.add_argument("instance", help="instance JSON file, or - for stdin")
    p.add_argument("name_map", help="name map JSON written by emit-lp")
    p.add_argument("assignment", help="'name value' lines, or - for stdin")
    _add_output_flag(p, "solution file")
    _add_json_flag(p)
    p.set_defaults(func=_cmd_map_solution)

    p = sub.add_parser("generate", help="generate synthetic instances")
    p.add_argument("config", nargs="?", default=None,
                   help="generator config JSON, or - for stdin "
                        "(optional if flags are given)")
    _add_output_flag(p, "instance file")
    p.add_argument("--out-dir", default=None, metavar="DIR",
                   help="write numbered instance files here instead")
    p.add_argument("--count", type=int, default=None, metavar="N",
                   help="number of instances for --out-dir (seeds offset "
                        "by 0..N-1)")
    p.add_argument("--num-stations", type=int, default=None, dest="num_stations")
    p.add_argument("--tracks-per-station", type=int, default=None,
                   dest="tracks_per_station")
    p.add_argument("--num-trains", type=int, default=None, dest="num_trains")
    p.add_argument("--up-fraction", type=float, default=None, dest="up_fraction")
    p.add_argument("--headway", type=int, default=None)
    p.add_argument("--cost-shape", choices=generate.COST_SHAPES, default=None,
                   dest="cost_shape")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_generate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except _Fail as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except BrokenPipeError:
        return EXIT_OK
    except Exception as e:                       # pragma: no cover - guard rail
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":                       # pragma: no cover
    sys.exit(main())
