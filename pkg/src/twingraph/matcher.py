"""Port matching: the reasoner that connects compatible model ports.

A candidate pair is an output port of a model upstream in the production
sequence and an input port of a model strictly downstream (any predecessor
counts, not only the adjacent one: CO2 flows from capture straight to
methanation, skipping electrolysis). Each candidate runs through four
checks in order; the first failure decides the verdict:

1. quantity token equality,
2. datatype compatibility (equal, or integer output into real input),
3. unit conversion (multiplicative only),
4. range rule on the converted output range [min*f, max*f].
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .aas import Datatype, Direction, Port
from .errors import (
    ConsistencyError,
    DirectionError,
    IncompatibleUnitsError,
    UnknownUnitError,
)
from .kgraph import EdgeKind, KnowledgeGraph, NodeKind, model_node_id
from .units import UnitRegistry
from .util import canonical_json


class Verdict(str, Enum):
    MATCH = "match"
    UNIT_MISMATCH = "unitMismatch"
    DIMENSION_MISMATCH = "dimensionMismatch"
    RANGE_VIOLATION = "rangeViolation"
    DATATYPE_MISMATCH = "datatypeMismatch"


class RangeMode(str, Enum):
    SUBSET = "subset"
    OVERLAP = "overlap"


@dataclass(frozen=True)
class MatchResult:
    """Outcome of one pairwise compatibility check."""

    verdict: Verdict
    conversion_factor: float | None
    detail: str

    @property
    def matched(self) -> bool:
        return self.verdict is Verdict.MATCH


@dataclass(frozen=True)
class MatchReport:
    """Graph-level matching outcome, deterministic and serializable."""

    range_mode: RangeMode
    edges_added: tuple[tuple[str, str, float], ...]
    excluded_models: tuple[tuple[str, str], ...]
    unsatisfied_inputs: tuple[tuple[str, str], ...]

    def to_dict(self) -> dict:
        return {
            "rangeMode": self.range_mode.value,
            "edgesAdded": [
                {"outPort": out, "inPort": inp, "conversionFactor": factor}
                for out, inp, factor in self.edges_added
            ],
            "excludedModels": [
                {"modelId": model_id, "reason": reason}
                for model_id, reason in self.excluded_models
            ],
            "unsatisfiedInputs": [
                {"modelId": model_id, "port": port}
                for model_id, port in self.unsatisfied_inputs
            ],
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


_WIDENINGS = {(Datatype.INTEGER, Datatype.REAL)}
_UNRANGED = {Datatype.BOOLEAN, Datatype.STRING}


def ports_compatible(
    registry: UnitRegistry,
    out_port: Port,
    in_port: Port,
    range_mode: RangeMode = RangeMode.SUBSET,
) -> MatchResult:
    """Check one output/input port pair; caller guarantees the directions."""
    if out_port.direction is not Direction.OUTPUT or in_port.direction is not Direction.INPUT:
        raise DirectionError(
            "ports_compatible needs an output port and an input port, got "
            f"{out_port.direction.value}/{in_port.direction.value}"
        )

    if out_port.quantity != in_port.quantity:
        return MatchResult(
            Verdict.DIMENSION_MISMATCH,
            None,
            f"quantity tokens differ: {out_port.quantity} vs {in_port.quantity}",
        )

    if out_port.datatype is not in_port.datatype and (
        (out_port.datatype, in_port.datatype) not in _WIDENINGS
    ):
        return MatchResult(
            Verdict.DATATYPE_MISMATCH,
            None,
            f"datatypes incompatible: {out_port.datatype.value} vs {in_port.datatype.value}",
        )

    try:
        ratio = registry.conversion_ratio(out_port.unit, in_port.unit)
    except UnknownUnitError as exc:
        return MatchResult(Verdict.UNIT_MISMATCH, None, f"unknown unit: {exc.message}")
    except IncompatibleUnitsError as exc:
        verdict = Verdict.DIMENSION_MISMATCH if exc.kind == "dimension" else Verdict.UNIT_MISMATCH
        return MatchResult(verdict, None, exc.message)
    factor = float(ratio)

    # Ranges are meaningless for boolean and string ports.
    if in_port.datatype not in _UNRANGED:
        low = out_port.range_min * factor
        high = out_port.range_max * factor
        if range_mode is RangeMode.SUBSET:
            ok = in_port.range_min <= low and high <= in_port.range_max
            rule = "not contained in"
        else:
            ok = low <= in_port.range_max and in_port.range_min <= high
            rule = "does not overlap"
        if not ok:
            return MatchResult(
                Verdict.RANGE_VIOLATION,
                None,
                f"converted range [{low}, {high}] {rule} [{in_port.range_min}, {in_port.range_max}]",
            )

    return MatchResult(Verdict.MATCH, factor, "compatible")


def _port_from_node(graph: KnowledgeGraph, node_id: str) -> Port:
    props = graph.node(node_id).properties
    return Port(
        name=props["name"],
        direction=Direction(props["direction"]),
        quantity=props["quantity"],
        unit=props["unit"],
        range_min=props["min"],
        range_max=props["max"],
        datatype=Datatype(props["datatype"]),
    )


def match_ports(
    graph: KnowledgeGraph,
    registry: UnitRegistry,
    range_mode: RangeMode = RangeMode.SUBSET,
) -> tuple[KnowledgeGraph, MatchReport]:
    """Connect compatible ports along the production sequence.

    Returns a copy of the graph extended with one connectsWith edge per
    match (carrying conversionFactor and rangeMode) plus a report naming
    added edges, excluded models and unsatisfied input ports.
    """
    sequence = graph.sequence_steps()
    if not sequence:
        raise ConsistencyError("graph declares no production sequence")
    position = {asset_id: i for i, asset_id in enumerate(sequence)}

    excluded: list[tuple[str, str]] = []
    in_play: list[tuple[int, str]] = []
    for model in graph.nodes(NodeKind.MODEL):
        owner = model.properties["ownerAssetId"]
        if owner not in position:
            excluded.append((model.properties["modelId"], f"owner asset {owner!r} not in sequence"))
        else:
            in_play.append((position[owner], model.id))
    in_play.sort(key=lambda item: (item[0], item[1]))

    result = graph.copy()
    edges: list[tuple[str, str, float]] = []
    for i, out_model in in_play:
        out_ports = [
            p for p in graph.ports_of_model(out_model)
            if graph.node(p).properties["direction"] == Direction.OUTPUT.value
        ]
        if not out_ports:
            continue
        for j, in_model in in_play:
            if j <= i:
                continue
            for in_node in graph.ports_of_model(in_model):
                in_props = graph.node(in_node).properties
                if in_props["direction"] != Direction.INPUT.value:
                    continue
                in_port = _port_from_node(graph, in_node)
                for out_node in out_ports:
                    check = ports_compatible(
                        registry, _port_from_node(graph, out_node), in_port, range_mode
                    )
                    if check.matched:
                        edges.append((out_node, in_node, check.conversion_factor))
    edges.sort()
    for out_node, in_node, factor in edges:
        result.add_edge(
            out_node,
            EdgeKind.CONNECTS_WITH,
            in_node,
            {"conversionFactor": factor, "rangeMode": range_mode.value},
        )

    touched = {out_node for out_node, _, _ in edges} | {in_node for _, in_node, _ in edges}
    matched_models = {graph.model_of_port(p) for p in touched}
    unsatisfied: list[tuple[str, str]] = []
    for pos, model_node in in_play:
        props = graph.node(model_node).properties
        if model_node not in matched_models:
            excluded.append((props["modelId"], "no topology connections"))
            continue
        # Inputs of the first sequence asset are exogenous by definition.
        if pos == 0:
            continue
        for port_node in graph.ports_of_model(model_node):
            port_props = graph.node(port_node).properties
            if port_props["direction"] != Direction.INPUT.value:
                continue
            if port_node not in touched:
                unsatisfied.append((props["modelId"], port_props["name"]))

    report = MatchReport(
        range_mode=range_mode,
        edges_added=tuple(edges),
        excluded_models=tuple(sorted(excluded)),
        unsatisfied_inputs=tuple(sorted(unsatisfied)),
    )
    return result, report


def match_from_model_id(port_node_id: str) -> str:
    """Model id embedded in a port node id ("port:{modelId}#{port}")."""
    body = port_node_id.split(":", 1)[1]
    return model_node_id(body.rsplit("#", 1)[0])
