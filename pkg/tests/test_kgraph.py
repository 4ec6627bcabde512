"""Knowledge graph: construction, invariants, queries and serialization."""

import json

import pytest

from twingraph import (
    ConsistencyError,
    DocumentSyntaxError,
    EdgeKind,
    KnowledgeGraph,
    NodeKind,
    SchemaError,
    asset_node_id,
    build_graph,
    build_hierarchy,
    export_graph,
    import_graph,
    model_node_id,
    port_node_id,
    query_models,
    system_node_id,
    validate_graph,
)

from builders import add_model, add_port, base_graph


# ---------------------------------------------------------------------------
# Construction from fixtures


def test_fixture_graph_shape(fixture_graph):
    assert len(fixture_graph) == 16
    assert len(fixture_graph.nodes(NodeKind.PRODUCTION_SYSTEM)) == 1
    assert len(fixture_graph.nodes(NodeKind.ASSET)) == 4
    assert len(fixture_graph.nodes(NodeKind.MODEL)) == 3
    assert len(fixture_graph.nodes(NodeKind.PORT)) == 8
    assert fixture_graph.edge_count() == 16
    assert fixture_graph.edge_count(EdgeKind.HAS_PART) == 3
    assert fixture_graph.edge_count(EdgeKind.FOLLOWED_BY) == 2
    assert fixture_graph.edge_count(EdgeKind.DESCRIBED_BY) == 3
    assert fixture_graph.edge_count(EdgeKind.HAS_PORT) == 8
    assert fixture_graph.edge_count(EdgeKind.CONNECTS_WITH) == 0


def test_fixture_graph_model_properties(fixture_graph):
    props = fixture_graph.node(model_node_id("DAC_Surrogate")).properties
    assert props["modelId"] == "DAC_Surrogate"
    assert props["ownerAssetId"] == "DAC"
    assert props["decisionLevel"] == "Control"
    assert props["computingTime"] == 1.0
    assert props["accuracy"] == 0.95
    assert props["discipline"] == "adsorption"
    assert props["evaluationCount"] == 0
    assert props["surrogate"]["outputs"] == ["CO2"]
    assert props["surrogate"]["b"] == [55.0]


def test_fixture_graph_port_properties(fixture_graph):
    props = fixture_graph.node(port_node_id("Electrolysis_PEM", "H2")).properties
    assert props == {
        "name": "H2",
        "modelId": "Electrolysis_PEM",
        "direction": "output",
        "quantity": "h2_mass_flow",
        "unit": "kg/h",
        "min": 0.0,
        "max": 100.0,
        "datatype": "real",
    }


def test_fixture_graph_system_and_sequence(fixture_graph):
    system = fixture_graph.production_system()
    assert system.id == system_node_id("PtX_System")
    assert fixture_graph.sequence_steps() == ["DAC", "Electrolysis", "Methanation"]


def test_fixture_graph_validates(fixture_graph):
    validate_graph(fixture_graph)


def test_build_graph_rejects_sequence_outside_hierarchy(fixture_shells, fixture_sequence):
    hierarchy = build_hierarchy(fixture_shells, "DAC")
    with pytest.raises(ConsistencyError, match="not part of the asset hierarchy"):
        build_graph(fixture_shells, hierarchy, fixture_sequence)


def test_build_graph_rejects_models_outside_hierarchy(fixture_shells, fixture_sequence):
    from builders import model_entry, port_entry, shell_of

    hierarchy = build_hierarchy(fixture_shells, "PtX_Platform")
    stray = shell_of(
        "Stray", models=[model_entry("Stray_Model", [port_entry("x", "input", "purity", "-", 0, 1)])]
    )
    with pytest.raises(ConsistencyError, match="not in the hierarchy"):
        build_graph(list(fixture_shells) + [stray], hierarchy, fixture_sequence)


# ---------------------------------------------------------------------------
# Write-side validation


def _two_ports() -> KnowledgeGraph:
    graph = base_graph("S", ["A"], ["A"])
    add_model(graph, "A", "M1")
    add_model(graph, "A", "M2")
    out_spec = {"name": "o", "direction": "output", "quantity": "q", "unit": "-",
                "min": 0.0, "max": 1.0, "datatype": "real"}
    in_spec = dict(out_spec, name="i", direction="input")
    add_port(graph, "M1", out_spec)
    add_port(graph, "M2", in_spec)
    return graph


def test_add_node_rejects_duplicate_id():
    graph = base_graph("S", ["A"], ["A"])
    with pytest.raises(ConsistencyError, match="duplicate node"):
        graph.add_node(asset_node_id("A"), NodeKind.ASSET)


def test_add_edge_requires_existing_endpoints():
    graph = base_graph("S", ["A"], ["A"])
    with pytest.raises(SchemaError, match="asset:B") as err:
        graph.add_edge(asset_node_id("A"), EdgeKind.HAS_PART, asset_node_id("B"))
    assert err.value.path == "asset:B"
    with pytest.raises(SchemaError, match="asset:B"):
        graph.add_edge(asset_node_id("B"), EdgeKind.HAS_PART, asset_node_id("A"))


@pytest.mark.parametrize(
    "kind, src, dst",
    [
        (EdgeKind.HAS_PART, "system:S", "model:M1"),
        (EdgeKind.FOLLOWED_BY, "asset:A", "model:M1"),
        (EdgeKind.DESCRIBED_BY, "model:M1", "asset:A"),
        (EdgeKind.HAS_PORT, "asset:A", "port:M1#o"),
        (EdgeKind.CONNECTS_WITH, "model:M1", "model:M2"),
    ],
)
def test_add_edge_enforces_endpoint_kinds(kind, src, dst):
    graph = _two_ports()
    with pytest.raises(SchemaError, match="cannot connect"):
        graph.add_edge(src, kind, dst)


def test_connects_with_requires_output_to_input():
    graph = _two_ports()
    out_port = port_node_id("M1", "o")
    in_port = port_node_id("M2", "i")
    with pytest.raises(SchemaError, match="output port to an input port"):
        graph.add_edge(in_port, EdgeKind.CONNECTS_WITH, out_port)
    with pytest.raises(SchemaError, match="output port to an input port"):
        graph.add_edge(out_port, EdgeKind.CONNECTS_WITH, out_port)
    graph.add_edge(out_port, EdgeKind.CONNECTS_WITH, in_port)


@pytest.mark.parametrize("factor", [0.0, -2.5])
def test_connects_with_rejects_non_positive_factor(factor):
    graph = _two_ports()
    with pytest.raises(SchemaError, match="conversionFactor"):
        graph.add_edge(
            port_node_id("M1", "o"),
            EdgeKind.CONNECTS_WITH,
            port_node_id("M2", "i"),
            {"conversionFactor": factor},
        )


def test_add_edge_rejects_duplicates():
    graph = base_graph("S", ["A", "B"], ["A", "B"])
    graph.add_edge(asset_node_id("A"), EdgeKind.FOLLOWED_BY, asset_node_id("B"))
    with pytest.raises(ConsistencyError, match="duplicate edge"):
        graph.add_edge(asset_node_id("A"), EdgeKind.FOLLOWED_BY, asset_node_id("B"))


def test_version_counts_every_write():
    graph = KnowledgeGraph()
    assert graph.version == 0
    assert graph.add_node("asset:A", NodeKind.ASSET) == 1
    assert graph.add_node("asset:B", NodeKind.ASSET) == 2
    assert graph.add_edge("asset:A", EdgeKind.HAS_PART, "asset:B") == 3
    assert graph.set_node_property("asset:A", "name", "A") == 4
    assert graph.version == 4


def test_set_node_property_requires_node():
    graph = KnowledgeGraph()
    with pytest.raises(SchemaError, match="no node"):
        graph.set_node_property("asset:A", "name", "A")


def test_copy_is_independent(fixture_graph):
    clone = fixture_graph.copy()
    assert clone.version == fixture_graph.version
    assert export_graph(clone) == export_graph(fixture_graph)

    clone.set_node_property(model_node_id("DAC_Surrogate"), "evaluationCount", 7)
    clone.add_node("asset:Extra", NodeKind.ASSET)
    assert fixture_graph.node(model_node_id("DAC_Surrogate")).properties["evaluationCount"] == 0
    assert not fixture_graph.has_node("asset:Extra")


# ---------------------------------------------------------------------------
# Read side


def test_node_lookup_and_membership(fixture_graph):
    assert fixture_graph.has_node(asset_node_id("DAC"))
    assert not fixture_graph.has_node("asset:Nope")
    with pytest.raises(SchemaError, match="no node"):
        fixture_graph.node("asset:Nope")


def test_nodes_are_sorted_by_id(fixture_graph):
    ids = [n.id for n in fixture_graph.nodes()]
    assert ids == sorted(ids)
    asset_ids = [n.id for n in fixture_graph.nodes(NodeKind.ASSET)]
    assert asset_ids == sorted(asset_ids)


def test_edge_filters(fixture_graph):
    dac = asset_node_id("DAC")
    from_dac = fixture_graph.edges(src=dac)
    assert {e.kind for e in from_dac} == {EdgeKind.FOLLOWED_BY, EdgeKind.DESCRIBED_BY}
    described = fixture_graph.edges(EdgeKind.DESCRIBED_BY, src=dac)
    assert [e.dst for e in described] == [model_node_id("DAC_Surrogate")]
    assert fixture_graph.edges(dst="port:Nope#x") == []
    assert fixture_graph.has_edge(dac, EdgeKind.DESCRIBED_BY, model_node_id("DAC_Surrogate"))
    assert not fixture_graph.has_edge(dac, EdgeKind.HAS_PART, model_node_id("DAC_Surrogate"))


def test_model_and_port_accessors(fixture_graph):
    assert fixture_graph.models_of_asset("Methanation") == [model_node_id("Methanation_Detailed")]
    ports = fixture_graph.ports_of_model(model_node_id("Electrolysis_PEM"))
    assert ports == [
        port_node_id("Electrolysis_PEM", "H2"),
        port_node_id("Electrolysis_PEM", "O2"),
        port_node_id("Electrolysis_PEM", "power"),
    ]
    assert fixture_graph.model_of_port(ports[0]) == model_node_id("Electrolysis_PEM")


def test_model_of_port_requires_single_owner():
    graph = base_graph("S", ["A"], ["A"])
    graph.add_node("port:M#x", NodeKind.PORT, {"direction": "input"})
    with pytest.raises(SchemaError, match="0 owning models"):
        graph.model_of_port("port:M#x")


def test_production_system_requires_exactly_one():
    with pytest.raises(ConsistencyError, match="0 ProductionSystem"):
        KnowledgeGraph().production_system()


def test_query_models(fixture_graph):
    everything = query_models(fixture_graph)
    assert everything == [
        model_node_id("DAC_Surrogate"),
        model_node_id("Electrolysis_PEM"),
        model_node_id("Methanation_Detailed"),
    ]
    assert query_models(fixture_graph, asset_id="DAC") == [model_node_id("DAC_Surrogate")]
    assert query_models(fixture_graph, decision_level="Control") == everything
    assert query_models(fixture_graph, level_of_detail="processUnit") == everything
    assert query_models(fixture_graph, discipline="chemical") == []
    assert query_models(fixture_graph, asset_id="DAC", discipline="adsorption") == [
        model_node_id("DAC_Surrogate")
    ]
    assert query_models(fixture_graph, asset_id="DAC", discipline="electrochemistry") == []
    assert query_models(fixture_graph, asset_id="PtX_Platform") == []


# ---------------------------------------------------------------------------
# Export / import


def test_json_round_trip(fixture_graph):
    text = export_graph(fixture_graph)
    assert export_graph(import_graph(text)) == text


def test_rebuild_is_byte_identical(fixture_shells, fixture_sequence):
    exports = []
    for _ in range(2):
        hierarchy = build_hierarchy(fixture_shells, "PtX_Platform")
        exports.append(export_graph(build_graph(fixture_shells, hierarchy, fixture_sequence)))
    assert exports[0] == exports[1]


def test_json_export_is_sorted(fixture_graph):
    obj = json.loads(export_graph(fixture_graph))
    node_ids = [n["id"] for n in obj["nodes"]]
    assert node_ids == sorted(node_ids)
    edge_keys = [(e["src"], e["kind"], e["dst"]) for e in obj["edges"]]
    assert edge_keys == sorted(edge_keys)


def test_statement_export_shape(fixture_graph):
    text = export_graph(fixture_graph, fmt="statements")
    lines = text.splitlines()
    assert len(lines) == len(fixture_graph) + fixture_graph.edge_count()
    assert all(line.endswith(";") for line in lines)
    merges = [line for line in lines if line.startswith("MERGE (n:")]
    assert len(merges) == len(fixture_graph)
    assert any('MERGE (n:Model {id: "model:DAC_Surrogate"})' in line for line in merges)
    assert any("-[r:followedBy]->" in line for line in lines)
    assert text == export_graph(fixture_graph, fmt="statements")


def test_statement_export_escapes_strings():
    graph = base_graph("S", ["A"], ["A"])
    graph.set_node_property(asset_node_id("A"), "note", 'say "hi"\nplease')
    line = [
        ln for ln in export_graph(graph, fmt="statements").splitlines() if "note" in ln
    ][0]
    assert '\\"hi\\"' in line and "\\n" in line


def test_export_unknown_format(fixture_graph):
    with pytest.raises(ValueError, match="unknown export format"):
        export_graph(fixture_graph, fmt="graphml")


def test_import_unknown_format():
    with pytest.raises(ValueError, match="unsupported import format"):
        import_graph("", fmt="statements")


@pytest.mark.parametrize(
    "text, error, match",
    [
        ("{oops", DocumentSyntaxError, "malformed graph document"),
        ("[]", SchemaError, '"nodes" and "edges"'),
        ('{"nodes": []}', SchemaError, '"nodes" and "edges"'),
        ('{"nodes": [{"kind": "Asset"}], "edges": []}', SchemaError, "id and kind"),
        (
            '{"nodes": [{"id": "x:1", "kind": "Gadget"}], "edges": []}',
            SchemaError,
            "unknown node kind",
        ),
        (
            '{"nodes": [], "edges": [{"src": "a", "kind": "pointsAt", "dst": "b"}]}',
            SchemaError,
            "unknown edge kind",
        ),
        (
            '{"nodes": [], "edges": [1]}',
            SchemaError,
            "edge entries must be objects",
        ),
        (
            '{"nodes": [{"id": "asset:A", "kind": "Asset"}],'
            ' "edges": [{"src": "asset:A", "kind": "hasPart", "dst": "asset:B"}]}',
            SchemaError,
            "does not exist",
        ),
    ],
)
def test_import_rejects(text, error, match):
    with pytest.raises(error, match=match):
        import_graph(text)


def test_import_runs_structural_validation():
    graph = base_graph("S", ["A"], ["A"])
    add_model(graph, "A", "M1")
    with pytest.raises(SchemaError, match="has no ports"):
        import_graph(export_graph(graph))


# ---------------------------------------------------------------------------
# Structural invariants


def test_validate_rejects_branching_sequence():
    graph = base_graph("S", ["A", "B"], ["A", "B", "C"])
    graph.add_edge(asset_node_id("A"), EdgeKind.FOLLOWED_BY, asset_node_id("B"))
    graph.add_edge(asset_node_id("A"), EdgeKind.FOLLOWED_BY, asset_node_id("C"))
    with pytest.raises(SchemaError, match="simple path"):
        validate_graph(graph)


def test_validate_rejects_disjoint_chains():
    graph = base_graph("S", ["A", "B"], ["A", "B", "C", "D"])
    graph.add_edge(asset_node_id("A"), EdgeKind.FOLLOWED_BY, asset_node_id("B"))
    graph.add_edge(asset_node_id("C"), EdgeKind.FOLLOWED_BY, asset_node_id("D"))
    with pytest.raises(SchemaError, match="one simple path"):
        validate_graph(graph)


def test_validate_rejects_sequence_cycle():
    graph = base_graph("S", ["A", "B"], ["A", "B"])
    graph.add_edge(asset_node_id("A"), EdgeKind.FOLLOWED_BY, asset_node_id("B"))
    graph.add_edge(asset_node_id("B"), EdgeKind.FOLLOWED_BY, asset_node_id("A"))
    with pytest.raises(SchemaError, match="simple path"):
        validate_graph(graph)


def test_validate_checks_path_against_declared_sequence():
    graph = base_graph("S", ["A", "B"], ["A", "B"])
    graph.add_edge(asset_node_id("B"), EdgeKind.FOLLOWED_BY, asset_node_id("A"))
    with pytest.raises(SchemaError, match="declared production sequence"):
        validate_graph(graph)


def test_validate_accepts_graph_without_sequence_edges():
    graph = base_graph("S", [], ["A"])
    validate_graph(graph)
