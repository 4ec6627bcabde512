"""Command line wiring the pipeline end to end.

Subcommands mirror the pipeline stages: ingest, graph, match, select,
simulate, export. Each stage reads either the original shell source
(--source, or the TWIN_AAS_ENDPOINT environment variable) or an exported
graph artifact (--graph) and writes canonical, byte-stable artifacts into
--out. Exit codes: 0 success, 1 domain error, 2 usage error; every error
path prints one JSON object {code, message, path?} on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from .aas import DecisionLevel, extract_bom, extract_simulation_descriptors
from .adaption import Budget, configuration_from_dict, select_configuration
from .errors import TwinError, UsageError, ValidationError
from .ingest import (
    build_hierarchy,
    fetch_shells,
    load_sequence,
    read_aasx,
    read_directory,
)
from .kgraph import build_graph, export_graph, import_graph
from .matcher import RangeMode, match_ports
from .scenario import decisions_to_ndjson, load_scenario, run_closed_loop
from .units import UnitRegistry
from .util import canonical_json

ENDPOINT_VAR = "TWIN_AAS_ENDPOINT"


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(message)


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_shells(args):
    source = args.source or os.environ.get(ENDPOINT_VAR)
    if not source:
        raise UsageError(f"no --source given and {ENDPOINT_VAR} is not set")
    if source.startswith(("http://", "https://")):
        return fetch_shells(source)
    path = Path(source)
    if path.suffix.lower() in {".aasx", ".zip"}:
        return read_aasx(path)
    if path.is_dir():
        return read_directory(path)
    raise UsageError(f"source {source!r} is neither a URL, an .aasx package nor a directory")


def _detect_root(shells) -> str:
    referenced: set[str] = set()
    parents = []
    for shell in shells:
        children = extract_bom(shell)
        if children:
            parents.append(shell.id)
        referenced.update(children)
    roots = [sid for sid in parents if sid not in referenced]
    if len(roots) == 1:
        return roots[0]
    candidates = roots or [s.id for s in shells if s.id not in referenced]
    raise ValidationError(
        f"cannot determine the hierarchy root (candidates: {sorted(candidates)}); pass --root"
    )


def _registry(args) -> UnitRegistry:
    registry = UnitRegistry()
    if getattr(args, "units", None):
        registry = registry.extended_from_json(_read_text(args.units))
    return registry


def _graph_from_source(args):
    shells = _load_shells(args)
    if not args.sequence:
        raise UsageError("building a graph from a shell source needs --sequence")
    sequence = load_sequence(_read_text(args.sequence))
    root = args.root or _detect_root(shells)
    hierarchy = build_hierarchy(shells, root)
    return build_graph(shells, hierarchy, sequence)


def _graph_input(args, *, matched: bool):
    """An existing --graph artifact, or a fresh build (matched on demand)."""
    if getattr(args, "graph", None):
        return import_graph(_read_text(args.graph))
    graph = _graph_from_source(args)
    if matched:
        graph, _ = match_ports(graph, _registry(args), RangeMode(args.range_mode))
    return graph


def _budget(args) -> Budget:
    return Budget(
        max_computing_time=args.max_time if args.max_time is not None else math.inf,
        min_accuracy=args.min_accuracy if args.min_accuracy is not None else 0.0,
    )


def _out_dir(args) -> Path:
    directory = Path(args.out)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def cmd_ingest(args) -> int:
    shells = _load_shells(args)
    entries = []
    for shell in sorted(shells, key=lambda s: s.id):
        entries.append(
            {
                "id": shell.id,
                "idShort": shell.id_short,
                "assetKind": shell.asset_kind.value,
                "submodels": [sm.id_short for sm in shell.submodels],
                "models": [d.model_id for d in extract_simulation_descriptors(shell)],
            }
        )
    report = {"count": len(entries), "shells": entries}
    _write(_out_dir(args) / "shells_report.json", canonical_json(report))
    print(f"ingested {len(entries)} shells")
    return 0


def cmd_graph(args) -> int:
    graph = _graph_from_source(args)
    _write(_out_dir(args) / "graph.json", export_graph(graph, "json"))
    print(f"graph: {len(graph)} nodes, {graph.edge_count()} edges")
    return 0


def cmd_match(args) -> int:
    graph = _graph_input(args, matched=False)
    matched, report = match_ports(graph, _registry(args), RangeMode(args.range_mode))
    out = _out_dir(args)
    _write(out / "matched_graph.json", export_graph(matched, "json"))
    _write(out / "match_report.json", report.to_json())
    print(
        f"matched {len(report.edges_added)} port pair(s), "
        f"{len(report.excluded_models)} model(s) excluded, "
        f"{len(report.unsatisfied_inputs)} input(s) unsatisfied"
    )
    return 0


def cmd_select(args) -> int:
    graph = _graph_input(args, matched=True)
    configuration = select_configuration(
        graph, DecisionLevel(args.level), _budget(args), exclude=frozenset(args.exclude)
    )
    _write(_out_dir(args) / "configuration.json", configuration.to_json())
    chosen = ", ".join(f"{a}={m}" for a, m in configuration.selection.items())
    print(f"selected {chosen}")
    return 0


def cmd_simulate(args) -> int:
    graph = _graph_input(args, matched=True)
    level = DecisionLevel(args.level)
    budget = _budget(args)
    if args.configuration:
        configuration = configuration_from_dict(json.loads(_read_text(args.configuration)))
    else:
        configuration = select_configuration(
            graph, level, budget, exclude=frozenset(args.exclude)
        )
    scenario = load_scenario(_read_text(args.scenario))
    records = run_closed_loop(graph, configuration, scenario, level=level, budget=budget)
    _write(_out_dir(args) / "decisions.ndjson", decisions_to_ndjson(records))
    print("decisions: " + ", ".join(r["verdict"] for r in records))
    return 0


def cmd_export(args) -> int:
    graph = _graph_input(args, matched=False)
    if args.format == "statements":
        _write(_out_dir(args) / "graph.cypher", export_graph(graph, "statements"))
    else:
        _write(_out_dir(args) / "graph_export.json", export_graph(graph, "json"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twingraph", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sub, *, graph_flag=True, units=False):
        sub.add_argument("--source", help="shell source: URL, .aasx package, or directory")
        sub.add_argument("--sequence", help="production sequence JSON file")
        sub.add_argument("--root", help="hierarchy root asset id (default: auto-detect)")
        sub.add_argument("--out", default="out", help="artifact directory (default: out)")
        if graph_flag:
            sub.add_argument("--graph", help="use an exported graph JSON instead of --source")
        if units:
            sub.add_argument("--units", help="unit registry extension JSON file")
            sub.add_argument(
                "--range-mode",
                choices=[m.value for m in RangeMode],
                default=RangeMode.SUBSET.value,
                help="range rule for port matching (default: subset)",
            )

    def selection_flags(sub):
        sub.add_argument(
            "--level",
            choices=[l.value for l in DecisionLevel],
            default=DecisionLevel.CONTROL.value,
            help="decision level of candidate models (default: Control)",
        )
        sub.add_argument("--max-time", type=float, help="computing time budget in seconds")
        sub.add_argument("--min-accuracy", type=float, help="per-model accuracy floor")
        sub.add_argument(
            "--exclude", action="append", default=[], metavar="MODEL_ID",
            help="model id to exclude (repeatable)",
        )

    sub = commands.add_parser("ingest", help="parse shells and write a report")
    common(sub, graph_flag=False)
    sub.set_defaults(func=cmd_ingest)

    sub = commands.add_parser("graph", help="build the knowledge graph")
    common(sub, graph_flag=False)
    sub.set_defaults(func=cmd_graph)

    sub = commands.add_parser("match", help="run port matching")
    common(sub, units=True)
    sub.set_defaults(func=cmd_match)

    sub = commands.add_parser("select", help="select a model configuration")
    common(sub, units=True)
    selection_flags(sub)
    sub.set_defaults(func=cmd_select)

    sub = commands.add_parser("simulate", help="run the closed adaption loop")
    common(sub, units=True)
    selection_flags(sub)
    sub.add_argument("--scenario", required=True, help="scenario JSON file")
    sub.add_argument("--configuration", help="configuration JSON instead of selecting")
    sub.set_defaults(func=cmd_simulate)

    sub = commands.add_parser("export", help="export the graph as Cypher statements or JSON")
    common(sub)
    sub.add_argument(
        "--format", choices=["statements", "json"], default="statements",
        help="export format (default: statements)",
    )
    sub.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(json.dumps(exc.to_json(), sort_keys=True) + "\n")
        return 2
    except TwinError as exc:
        sys.stderr.write(json.dumps(exc.to_json(), sort_keys=True) + "\n")
        return 1
    except OSError as exc:
        sys.stderr.write(
            json.dumps({"code": "IOError", "message": str(exc)}, sort_keys=True) + "\n"
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
