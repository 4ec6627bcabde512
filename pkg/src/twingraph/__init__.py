"""Knowledge-backed digital twin toolkit for Power-to-X process chains.

Parses Asset Administration Shell documents, builds a typed knowledge
graph of assets, models and ports, matches compatible ports with unit
conversion, selects model configurations under budgets, and runs a
closed adaption loop (keep / reparameterize / reselect) against
measured behavior.
"""

from .aas import (
    AdministrationShell,
    AssetKind,
    Collection,
    Datatype,
    DecisionLevel,
    Direction,
    LevelOfDetail,
    Parameter,
    Port,
    Property,
    Reference,
    SimulationModelDescriptor,
    SolverSpec,
    Submodel,
    SurrogateSpec,
    extract_bom,
    extract_simulation_descriptors,
    parse_shell,
    resolve_id_short,
    serialize_shell,
)
from .adaption import (
    AdaptionDecision,
    AdaptionVerdict,
    Budget,
    DeviationReport,
    ModelConfiguration,
    SurrogateEvaluation,
    TelemetrySeries,
    Thresholds,
    WindowSamples,
    adapt,
    compute_deviation,
    configuration_from_dict,
    evaluate_surrogate,
    refit_affine,
    select_configuration,
    signal_owner,
)
from .errors import (
    AggregateShellError,
    ArchiveError,
    ConsistencyError,
    CycleError,
    DanglingReferenceError,
    DegenerateFitError,
    DirectionError,
    DocumentSyntaxError,
    EmptyWindowError,
    IncompatibleUnitsError,
    InfeasibleError,
    MissingInputError,
    NoSurrogateError,
    NotFoundError,
    OutOfRangeError,
    SchemaError,
    SignalMismatchError,
    TransportError,
    TwinError,
    UnknownUnitError,
    UsageError,
    ValidationError,
)
from .ingest import (
    HierarchyTree,
    ProductionSequence,
    build_hierarchy,
    fetch_shells,
    load_sequence,
    read_aasx,
    read_directory,
    write_aasx,
)
from .kgraph import (
    Edge,
    EdgeKind,
    KnowledgeGraph,
    Node,
    NodeKind,
    asset_node_id,
    build_graph,
    export_graph,
    import_graph,
    model_node_id,
    port_node_id,
    query_models,
    system_node_id,
    validate_graph,
)
from .matcher import (
    MatchReport,
    MatchResult,
    RangeMode,
    Verdict,
    match_from_model_id,
    match_ports,
    ports_compatible,
)
from .scenario import (
    ConstantSignal,
    DriftStep,
    RampSignal,
    SampledSignal,
    Scenario,
    TrueProcessEntry,
    decisions_to_ndjson,
    load_scenario,
    run_closed_loop,
)
from .units import UnitDef, UnitRegistry

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
