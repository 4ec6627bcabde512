"""Embedded typed property graph: the knowledge base of the twin.

Nodes are ProductionSystem / Asset / Model / Port, edges are hasPart,
followedBy, describedBy, hasPort and connectsWith; endpoint kinds are
enforced on insert and connectsWith only runs from an output port to an
input port. The graph lives in memory with a canonical JSON file form and
a Cypher-compatible statement export for loading into a graph database.

Concurrency contract: many readers or one writer. Readers treat a graph as
a snapshot; every mutating method bumps and returns ``version`` (the write
token), and pipeline stages that extend a graph work on a ``copy()``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .aas import AdministrationShell, SimulationModelDescriptor, extract_simulation_descriptors
from .errors import ConsistencyError, DocumentSyntaxError, SchemaError
from .ingest import HierarchyTree, ProductionSequence
from .util import canonical_json


class NodeKind(str, Enum):
    PRODUCTION_SYSTEM = "ProductionSystem"
    ASSET = "Asset"
    MODEL = "Model"
    PORT = "Port"


class EdgeKind(str, Enum):
    HAS_PART = "hasPart"
    FOLLOWED_BY = "followedBy"
    DESCRIBED_BY = "describedBy"
    HAS_PORT = "hasPort"
    CONNECTS_WITH = "connectsWith"


# Allowed (source kind, destination kind) pairs per edge kind.
EDGE_SIGNATURES: dict[EdgeKind, frozenset[tuple[NodeKind, NodeKind]]] = {
    EdgeKind.HAS_PART: frozenset(
        {
            (NodeKind.PRODUCTION_SYSTEM, NodeKind.ASSET),
            (NodeKind.ASSET, NodeKind.ASSET),
        }
    ),
    EdgeKind.FOLLOWED_BY: frozenset({(NodeKind.ASSET, NodeKind.ASSET)}),
    EdgeKind.DESCRIBED_BY: frozenset({(NodeKind.ASSET, NodeKind.MODEL)}),
    EdgeKind.HAS_PORT: frozenset({(NodeKind.MODEL, NodeKind.PORT)}),
    EdgeKind.CONNECTS_WITH: frozenset({(NodeKind.PORT, NodeKind.PORT)}),
}


def asset_node_id(asset_id: str) -> str:
    return f"asset:{asset_id}"


def model_node_id(model_id: str) -> str:
    return f"model:{model_id}"


def port_node_id(model_id: str, port_name: str) -> str:
    return f"port:{model_id}#{port_name}"


def system_node_id(system_id: str) -> str:
    return f"system:{system_id}"


@dataclass
class Node:
    id: str
    kind: NodeKind
    properties: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Edge:
    src: str
    kind: EdgeKind
    dst: str
    properties: Mapping = field(default_factory=dict)

    def key(self) -> tuple[str, str, str]:
        return (self.src, self.kind.value, self.dst)


class KnowledgeGraph:
    def __init__(self):
        self._nodes: dict[str, Node] = {}
        self._edges: dict[tuple[str, str, str], Edge] = {}
        self._by_kind: dict[NodeKind, list[str]] = {k: [] for k in NodeKind}
        self.version = 0

    # -- write side -------------------------------------------------------

    def add_node(self, node_id: str, kind: NodeKind, properties: dict | None = None) -> int:
        if node_id in self._nodes:
            raise ConsistencyError(f"duplicate node id {node_id!r}", path=node_id)
        self._nodes[node_id] = Node(node_id, kind, dict(properties or {}))
        self._by_kind[kind].append(node_id)
        self.version += 1
        return self.version

    def add_edge(
        self,
        src: str,
        kind: EdgeKind,
        dst: str,
        properties: Mapping | None = None,
    ) -> int:
        src_node = self._nodes.get(src)
        dst_node = self._nodes.get(dst)
        if src_node is None or dst_node is None:
            missing = src if src_node is None else dst
            raise SchemaError(f"edge endpoint {missing!r} does not exist", path=missing)
        if (src_node.kind, dst_node.kind) not in EDGE_SIGNATURES[kind]:
            raise SchemaError(
                f"{kind.value} cannot connect {src_node.kind.value} to {dst_node.kind.value}",
                path=f"{src}->{dst}",
            )
        if kind is EdgeKind.CONNECTS_WITH:
            if src_node.properties.get("direction") != "output" or dst_node.properties.get("direction") != "input":
                raise SchemaError(
                    "connectsWith must run from an output port to an input port",
                    path=f"{src}->{dst}",
                )
            factor = (properties or {}).get("conversionFactor")
            if factor is not None and not factor > 0:
                raise SchemaError(
                    f"conversionFactor must be > 0, got {factor}", path=f"{src}->{dst}"
                )
        key = (src, kind.value, dst)
        if key in self._edges:
            raise ConsistencyError(f"duplicate edge {key}", path=f"{src}->{dst}")
        self._edges[key] = Edge(src, kind, dst, dict(properties or {}))
        self.version += 1
        return self.version

    def set_node_property(self, node_id: str, key: str, value) -> int:
        node = self._nodes.get(node_id)
        if node is None:
            raise SchemaError(f"no node {node_id!r}", path=node_id)
        node.properties[key] = value
        self.version += 1
        return self.version

    def copy(self) -> "KnowledgeGraph":
        clone = KnowledgeGraph()
        for node_id in self._nodes:
            node = self._nodes[node_id]
            clone._nodes[node_id] = Node(node.id, node.kind, dict(node.properties))
            clone._by_kind[node.kind].append(node_id)
        clone._edges = {k: Edge(e.src, e.kind, e.dst, dict(e.properties)) for k, e in self._edges.items()}
        clone.version = self.version
        return clone

    # -- read side --------------------------------------------------------

    def __len__(self) -> int:
        return len(self._nodes)

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def node(self, node_id: str) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise SchemaError(f"no node {node_id!r}", path=node_id) from None

    def has_edge(self, src: str, kind: EdgeKind, dst: str) -> bool:
        return (src, kind.value, dst) in self._edges

    def nodes(self, kind: NodeKind | None = None) -> list[Node]:
        if kind is None:
            return [self._nodes[i] for i in sorted(self._nodes)]
        return [self._nodes[i] for i in sorted(self._by_kind[kind])]

    def edges(
        self,
        kind: EdgeKind | None = None,
        src: str | None = None,
        dst: str | None = None,
    ) -> list[Edge]:
        found = [
            e
            for e in self._edges.values()
            if (kind is None or e.kind is kind)
            and (src is None or e.src == src)
            and (dst is None or e.dst == dst)
        ]
        found.sort(key=lambda e: e.key())
        return found

    def edge_count(self, kind: EdgeKind | None = None) -> int:
        if kind is None:
            return len(self._edges)
        return sum(1 for e in self._edges.values() if e.kind is kind)

    def models_of_asset(self, asset_id: str) -> list[str]:
        return [e.dst for e in self.edges(EdgeKind.DESCRIBED_BY, src=asset_node_id(asset_id))]

    def ports_of_model(self, model_node: str) -> list[str]:
        return [e.dst for e in self.edges(EdgeKind.HAS_PORT, src=model_node)]

    def model_of_port(self, port_node: str) -> str:
        owners = [e.src for e in self.edges(EdgeKind.HAS_PORT, dst=port_node)]
        if len(owners) != 1:
            raise SchemaError(f"port {port_node!r} has {len(owners)} owning models", path=port_node)
        return owners[0]

    def production_system(self) -> Node:
        systems = self.nodes(NodeKind.PRODUCTION_SYSTEM)
        if len(systems) != 1:
            raise ConsistencyError(f"graph has {len(systems)} ProductionSystem nodes")
        return systems[0]

    def sequence_steps(self) -> list[str]:
        return list(self.production_system().properties.get("sequence", []))


# ---------------------------------------------------------------------------
# Construction


def _model_properties(descriptor: SimulationModelDescriptor) -> dict:
    props = {
        "modelId": descriptor.model_id,
        "ownerAssetId": descriptor.owner_asset_id,
        "storageLocation": descriptor.storage_location,
        "simulationEnvironment": descriptor.simulation_environment,
        "solver": {
            "method": descriptor.solver.method,
            "stepSize": descriptor.solver.step_size,
            "tolerance": descriptor.solver.tolerance,
        },
        "parameters": [
            {"name": p.name, "value": p.value, "unit": p.unit}
            for p in descriptor.parameters
        ],
        "levelOfDetail": descriptor.level_of_detail.value,
        "discipline": descriptor.discipline,
        "decisionLevel": descriptor.decision_level.value,
        "computingTime": descriptor.computing_time_estimate,
        "accuracy": descriptor.accuracy_score,
        "evaluationCount": 0,
    }
    if descriptor.surrogate is not None:
        props["surrogate"] = {
            "kind": descriptor.surrogate.kind,
            "inputs": list(descriptor.surrogate.inputs),
            "outputs": list(descriptor.surrogate.outputs),
            "A": [list(row) for row in descriptor.surrogate.matrix],
            "b": list(descriptor.surrogate.offset),
        }
    return props


def build_graph(
    shells: Iterable[AdministrationShell],
    hierarchy: HierarchyTree,
    sequence: ProductionSequence,
) -> KnowledgeGraph:
    """Assemble the knowledge graph from parsed shells, hierarchy and sequence.

    Node ids are derived from source identifiers, so rebuilding from the same
    inputs yields a byte-identical canonical export.
    """
    shells = list(shells)
    assets = hierarchy.all_assets()
    asset_set = set(assets)
    for step in sequence.steps:
        if step not in asset_set:
            raise ConsistencyError(
                f"sequence step {step!r} is not part of the asset hierarchy", path=step
            )

    graph = KnowledgeGraph()
    graph.add_node(
        system_node_id(sequence.system_id),
        NodeKind.PRODUCTION_SYSTEM,
        {"systemId": sequence.system_id, "sequence": list(sequence.steps)},
    )

    shells_by_id = {s.id: s for s in shells}
    for asset_id in assets:
        shell = shells_by_id.get(asset_id)
        props = {"assetId": asset_id}
        if shell is not None:
            props["name"] = shell.id_short
            props["assetKind"] = shell.asset_kind.value
        graph.add_node(asset_node_id(asset_id), NodeKind.ASSET, props)

    for parent, children in hierarchy.children.items():
        for child in children:
            graph.add_edge(asset_node_id(parent), EdgeKind.HAS_PART, asset_node_id(child))

    for earlier, later in zip(sequence.steps, sequence.steps[1:]):
        graph.add_edge(asset_node_id(earlier), EdgeKind.FOLLOWED_BY, asset_node_id(later))

    for shell in shells:
        descriptors = extract_simulation_descriptors(shell)
        if descriptors and shell.id not in asset_set:
            raise ConsistencyError(
                f"shell {shell.id!r} carries simulation models but is not in the hierarchy",
                path=shell.id,
            )
        for descriptor in descriptors:
            model_node = model_node_id(descriptor.model_id)
            graph.add_node(model_node, NodeKind.MODEL, _model_properties(descriptor))
            graph.add_edge(asset_node_id(shell.id), EdgeKind.DESCRIBED_BY, model_node)
            for port in descriptor.ports:
                port_node = port_node_id(descriptor.model_id, port.name)
                graph.add_node(
                    port_node,
                    NodeKind.PORT,
                    {
                        "name": port.name,
                        "modelId": descriptor.model_id,
                        "direction": port.direction.value,
                        "quantity": port.quantity,
                        "unit": port.unit,
                        "min": port.range_min,
                        "max": port.range_max,
                        "datatype": port.datatype.value,
                    },
                )
                graph.add_edge(model_node, EdgeKind.HAS_PORT, port_node)
    return graph


# ---------------------------------------------------------------------------
# Queries


def query_models(
    graph: KnowledgeGraph,
    asset_id: str | None = None,
    level_of_detail: str | None = None,
    discipline: str | None = None,
    decision_level: str | None = None,
) -> list[str]:
    """Model node ids matching the conjunction of the given filters, sorted."""
    if asset_id is not None:
        candidates = graph.models_of_asset(asset_id)
    else:
        candidates = [n.id for n in graph.nodes(NodeKind.MODEL)]
    result = []
    for node_id in candidates:
        props = graph.node(node_id).properties
        if level_of_detail is not None and props.get("levelOfDetail") != level_of_detail:
            continue
        if discipline is not None and props.get("discipline") != discipline:
            continue
        if decision_level is not None and props.get("decisionLevel") != decision_level:
            continue
        result.append(node_id)
    return sorted(result)


# ---------------------------------------------------------------------------
# Export / import


def _graph_to_obj(graph: KnowledgeGraph) -> dict:
    nodes = [
        {"id": n.id, "kind": n.kind.value, "properties": n.properties}
        for n in graph.nodes()
    ]
    edges = [
        {"src": e.src, "kind": e.kind.value, "dst": e.dst, "properties": dict(e.properties)}
        for e in sorted(graph.edges(), key=lambda e: e.key())
    ]
    return {"nodes": nodes, "edges": edges}


def _cypher_literal(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return json.dumps(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    # Nested structures are not first-class graph properties; store as JSON.
    return json.dumps(json.dumps(value, sort_keys=True, ensure_ascii=False), ensure_ascii=False)


def _cypher_statements(graph: KnowledgeGraph) -> str:
    lines = []
    for node in graph.nodes():
        sets = ", ".join(
            f"n.{key} = {_cypher_literal(node.properties[key])}"
            for key in sorted(node.properties)
        )
        line = f"MERGE (n:{node.kind.value} {{id: {_cypher_literal(node.id)}}})"
        if sets:
            line += f" SET {sets}"
        lines.append(line + ";")
    for edge in sorted(graph.edges(), key=lambda e: e.key()):
        props = dict(edge.properties)
        sets = ", ".join(
            f"r.{key} = {_cypher_literal(props[key])}" for key in sorted(props)
        )
        line = (
            f"MATCH (a {{id: {_cypher_literal(edge.src)}}}), (b {{id: {_cypher_literal(edge.dst)}}}) "
            f"MERGE (a)-[r:{edge.kind.value}]->(b)"
        )
        if sets:
            line += f" SET {sets}"
        lines.append(line + ";")
    return "\n".join(lines) + ("\n" if lines else "")


def export_graph(graph: KnowledgeGraph, fmt: str = "json") -> str:
    """Canonical text form: "json" (single document) or "statements" (Cypher).

    The JSON export sorts nodes by id and edges by (src, kind, dst) and is the
    byte-identical canonical form used for idempotence checks; the statements
    export emits exactly one line per node and per edge.
    """
    if fmt == "json":
        return canonical_json(_graph_to_obj(graph))
    if fmt == "statements":
        return _cypher_statements(graph)
    raise ValueError(f"unknown export format {fmt!r}")


def _check_followed_by_path(graph: KnowledgeGraph) -> None:
    edges = graph.edges(EdgeKind.FOLLOWED_BY)
    if not edges:
        return
    outgoing: dict[str, str] = {}
    incoming: dict[str, str] = {}
    for e in edges:
        if e.src in outgoing or e.dst in incoming:
            raise SchemaError("followedBy edges must form a simple path", path=e.src)
        outgoing[e.src] = e.dst
        incoming[e.dst] = e.src
    heads = [src for src in outgoing if src not in incoming]
    if len(heads) != 1:
        raise SchemaError("followedBy edges must form one simple path")
    chain = [heads[0]]
    while chain[-1] in outgoing:
        nxt = outgoing[chain[-1]]
        if nxt in chain:
            raise SchemaError("followedBy edges must not form a cycle", path=nxt)
        chain.append(nxt)
    if len(chain) != len(edges) + 1:
        raise SchemaError("followedBy edges must form one simple path")
    systems = graph.nodes(NodeKind.PRODUCTION_SYSTEM)
    if systems:
        declared = systems[0].properties.get("sequence")
        if declared is not None:
            expected = [asset_node_id(a) for a in declared]
            if chain != expected:
                raise SchemaError(
                    "followedBy path does not match the declared production sequence"
                )


def validate_graph(graph: KnowledgeGraph) -> None:
    """Check the structural invariants import relies on."""
    for model in graph.nodes(NodeKind.MODEL):
        if not graph.ports_of_model(model.id):
            raise SchemaError(f"model {model.id!r} has no ports", path=model.id)
    for port in graph.nodes(NodeKind.PORT):
        graph.model_of_port(port.id)
    _check_followed_by_path(graph)


def import_graph(text: str, fmt: str = "json") -> KnowledgeGraph:
    """Inverse of the JSON export; rejects dangling edges and kind mismatches."""
    if fmt != "json":
        raise ValueError(f"unsupported import format {fmt!r}")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentSyntaxError(f"malformed graph document: {exc}") from exc
    if not isinstance(obj, dict) or "nodes" not in obj or "edges" not in obj:
        raise SchemaError('graph document needs "nodes" and "edges" arrays')

    graph = KnowledgeGraph()
    for node_obj in obj["nodes"]:
        if not isinstance(node_obj, dict) or "id" not in node_obj or "kind" not in node_obj:
            raise SchemaError("node entries need id and kind")
        try:
            kind = NodeKind(node_obj["kind"])
        except ValueError:
            raise SchemaError(
                f"unknown node kind {node_obj['kind']!r}", path=node_obj["id"]
            ) from None
        graph.add_node(node_obj["id"], kind, node_obj.get("properties", {}))
    for edge_obj in obj["edges"]:
        if not isinstance(edge_obj, dict):
            raise SchemaError("edge entries must be objects")
        try:
            kind = EdgeKind(edge_obj.get("kind"))
        except ValueError:
            raise SchemaError(f"unknown edge kind {edge_obj.get('kind')!r}") from None
        graph.add_edge(
            edge_obj.get("src"), kind, edge_obj.get("dst"), edge_obj.get("properties", {})
        )
    validate_graph(graph)
    return graph
