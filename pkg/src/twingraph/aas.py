"""Asset Administration Shell subset: domain types and canonical documents.

One canonical JSON document describes one shell. Top-level keys are
``id``, ``idShort``, ``assetKind`` and ``submodels``; submodel elements are
typed by key shape (``value``/``unit`` for properties, ``children`` for
collections, ``target`` for references) and addressed by slash-separated
ID-Short paths. Parsing is pure and validation is structural; unit symbols
are carried verbatim and only interpreted by the port matcher.

All types are frozen dataclasses with tuple-valued collections, so parsed
shells are immutable and safe to share between tasks.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Union

from .errors import DocumentSyntaxError, NotFoundError, SchemaError

ID_SHORT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")

# Recognized submodel kinds; any other kind string names an "other" submodel
# that is preserved verbatim and ignored by the extractors.
KIND_SIMULATION = "Simulation"
KIND_BILL_OF_MATERIAL = "BillOfMaterial"

# ID-Shorts that imply a kind when the document does not tag one.
_KIND_BY_ID_SHORT = {
    "SimulationModels": KIND_SIMULATION,
    "BillOfMaterial": KIND_BILL_OF_MATERIAL,
}


class AssetKind(str, Enum):
    INSTANCE = "instance"
    TYPE = "type"


class LevelOfDetail(str, Enum):
    MOLECULAR = "molecular"
    PHASE = "phase"
    PROCESS_UNIT = "processUnit"
    PLANT = "plant"
    PRODUCTION_SYSTEM = "productionSystem"


class DecisionLevel(str, Enum):
    CONTROL = "Control"
    SCHEDULING = "Scheduling"
    PLANNING = "Planning"


class Direction(str, Enum):
    INPUT = "input"
    OUTPUT = "output"


class Datatype(str, Enum):
    REAL = "real"
    INTEGER = "integer"
    BOOLEAN = "boolean"
    STRING = "string"


@dataclass(frozen=True)
class Property:
    """Leaf element holding one scalar value with an optional unit symbol."""

    id_short: str
    value: Union[str, int, float, bool]
    unit: str | None = None


@dataclass(frozen=True)
class Collection:
    """Element grouping an ordered run of child elements."""

    id_short: str
    children: tuple["SubmodelElement", ...] = ()


@dataclass(frozen=True)
class Reference:
    """Element pointing at another shell by its identifier."""

    id_short: str
    target: str


SubmodelElement = Union[Property, Collection, Reference]


@dataclass(frozen=True)
class Submodel:
    id_short: str
    kind: str
    elements: tuple[SubmodelElement, ...] = ()


@dataclass(frozen=True)
class AdministrationShell:
    id: str
    id_short: str
    asset_kind: AssetKind
    submodels: tuple[Submodel, ...] = ()

    def submodel(self, id_short: str) -> Submodel | None:
        for sm in self.submodels:
            if sm.id_short == id_short:
                return sm
        return None

    def submodel_of_kind(self, kind: str) -> Submodel | None:
        for sm in self.submodels:
            if sm.kind == kind:
                return sm
        return None


@dataclass(frozen=True)
class SolverSpec:
    method: str
    step_size: float
    tolerance: float


@dataclass(frozen=True)
class Parameter:
    name: str
    value: float
    unit: str


@dataclass(frozen=True)
class Port:
    """Typed physical interface of a model.

    ``range_min``/``range_max`` are in the declared unit; for boolean and
    string datatypes the interval is a degenerate marker that the matcher
    ignores.
    """

    name: str
    direction: Direction
    quantity: str
    unit: str
    range_min: float
    range_max: float
    datatype: Datatype


@dataclass(frozen=True)
class SurrogateSpec:
    """Affine stand-in for an executable model: outputs = A @ inputs + b.

    ``matrix`` is row-major with one row per output port and one column per
    input port; all values are in the declared port units.
    """

    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    matrix: tuple[tuple[float, ...], ...]
    offset: tuple[float, ...]
    kind: str = "affine"


@dataclass(frozen=True)
class SimulationModelDescriptor:
    model_id: str
    owner_asset_id: str
    storage_location: str
    simulation_environment: str
    solver: SolverSpec
    parameters: tuple[Parameter, ...]
    ports: tuple[Port, ...]
    level_of_detail: LevelOfDetail
    discipline: str
    decision_level: DecisionLevel
    computing_time_estimate: float
    accuracy_score: float
    surrogate: SurrogateSpec | None = None

    def port(self, name: str) -> Port | None:
        for p in self.ports:
            if p.name == name:
                return p
        return None

    def input_ports(self) -> tuple[Port, ...]:
        return tuple(p for p in self.ports if p.direction is Direction.INPUT)

    def output_ports(self) -> tuple[Port, ...]:
        return tuple(p for p in self.ports if p.direction is Direction.OUTPUT)


# ---------------------------------------------------------------------------
# Parsing


def _require_id_short(value, path: str) -> str:
    if not isinstance(value, str) or not ID_SHORT_RE.match(value):
        raise SchemaError(f"invalid idShort {value!r}", path=path)
    return value


def _parse_element(obj, path: str) -> SubmodelElement:
    if not isinstance(obj, dict):
        raise SchemaError("element must be an object", path=path)
    if "idShort" not in obj:
        raise SchemaError("element missing idShort", path=path)
    id_short = _require_id_short(obj["idShort"], path)
    here = f"{path}/{id_short}" if path else id_short

    payload_keys = [k for k in ("value", "children", "target") if k in obj]
    if len(payload_keys) != 1:
        raise SchemaError(
            "element must have exactly one of value/children/target", path=here
        )
    key = payload_keys[0]
    if key == "value":
        value = obj["value"]
        if not isinstance(value, (str, int, float, bool)):
            raise SchemaError("property value must be string, number or boolean", path=here)
        unit = obj.get("unit")
        if unit is not None and not isinstance(unit, str):
            raise SchemaError("unit must be a string", path=here)
        return Property(id_short, value, unit)
    if key == "target":
        target = obj["target"]
        if not isinstance(target, str) or not target:
            raise SchemaError("reference target must be a non-empty string", path=here)
        return Reference(id_short, target)
    children_obj = obj["children"]
    if not isinstance(children_obj, list):
        raise SchemaError("children must be a list", path=here)
    children = _parse_siblings(children_obj, here)
    return Collection(id_short, children)


def _parse_siblings(items: list, path: str) -> tuple[SubmodelElement, ...]:
    children = []
    seen: set[str] = set()
    for item in items:
        child = _parse_element(item, path)
        if child.id_short in seen:
            raise SchemaError(
                f"duplicate sibling idShort {child.id_short!r}",
                path=f"{path}/{child.id_short}" if path else child.id_short,
            )
        seen.add(child.id_short)
        children.append(child)
    return tuple(children)


def parse_shell(document: str) -> AdministrationShell:
    """Parse one canonical shell document.

    Raises DocumentSyntaxError for malformed JSON and SchemaError (with an
    ID-Short path) for structural violations; the result always re-serializes
    to an equal value.
    """
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as exc:
        raise DocumentSyntaxError(f"malformed shell document: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaError("shell document must be a JSON object")
    shell_id = obj.get("id")
    if not isinstance(shell_id, str) or not shell_id:
        raise SchemaError("shell missing id")
    id_short = obj.get("idShort")
    if id_short is None:
        raise SchemaError("shell missing idShort")
    id_short = _require_id_short(id_short, "")
    kind_raw = obj.get("assetKind", "instance")
    try:
        asset_kind = AssetKind(kind_raw)
    except ValueError:
        raise SchemaError(f"unknown assetKind {kind_raw!r}") from None

    submodels = []
    seen: set[str] = set()
    for sm_obj in obj.get("submodels", []):
        if not isinstance(sm_obj, dict):
            raise SchemaError("submodel must be an object")
        if "idShort" not in sm_obj:
            raise SchemaError("submodel missing idShort")
        sm_id_short = _require_id_short(sm_obj["idShort"], "")
        if sm_id_short in seen:
            raise SchemaError(
                f"duplicate submodel idShort {sm_id_short!r}", path=sm_id_short
            )
        seen.add(sm_id_short)
        kind = sm_obj.get("kind")
        if kind is None:
            kind = _KIND_BY_ID_SHORT.get(sm_id_short, sm_id_short)
        elif not isinstance(kind, str):
            raise SchemaError("submodel kind must be a string", path=sm_id_short)
        elements_obj = sm_obj.get("elements", [])
        if not isinstance(elements_obj, list):
            raise SchemaError("elements must be a list", path=sm_id_short)
        elements = _parse_siblings(elements_obj, sm_id_short)
        submodels.append(Submodel(sm_id_short, kind, elements))

    return AdministrationShell(shell_id, id_short, asset_kind, tuple(submodels))


# ---------------------------------------------------------------------------
# Serialization


def _element_to_obj(element: SubmodelElement) -> dict:
    if isinstance(element, Property):
        obj = {"idShort": element.id_short, "value": element.value}
        if element.unit is not None:
            obj["unit"] = element.unit
        return obj
    if isinstance(element, Reference):
        return {"idShort": element.id_short, "target": element.target}
    return {
        "idShort": element.id_short,
        "children": [_element_to_obj(c) for c in element.children],
    }


def shell_to_dict(shell: AdministrationShell) -> dict:
    return {
        "id": shell.id,
        "idShort": shell.id_short,
        "assetKind": shell.asset_kind.value,
        "submodels": [
            {
                "idShort": sm.id_short,
                "kind": sm.kind,
                "elements": [_element_to_obj(e) for e in sm.elements],
            }
            for sm in shell.submodels
        ],
    }


def serialize_shell(shell: AdministrationShell) -> str:
    """Canonical document text; parse_shell(serialize_shell(s)) == s."""
    return json.dumps(shell_to_dict(shell), indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# ID-Short resolution


def resolve_id_short(shell: AdministrationShell, path: str) -> SubmodelElement:
    """Resolve a slash-separated, case-sensitive ID-Short path.

    The first segment names a submodel (returned as a collection if the path
    ends there); the rest walk collection children.
    """
    if not path:
        raise NotFoundError("empty path", path=path)
    segments = path.split("/")
    submodel = shell.submodel(segments[0])
    if submodel is None:
        raise NotFoundError(f"no submodel {segments[0]!r}", path=path)
    current: SubmodelElement = Collection(submodel.id_short, submodel.elements)
    for segment in segments[1:]:
        if not isinstance(current, Collection):
            raise NotFoundError(
                f"{current.id_short!r} has no children to descend into", path=path
            )
        for child in current.children:
            if child.id_short == segment:
                current = child
                break
        else:
            raise NotFoundError(f"no element {segment!r}", path=path)
    return current


# ---------------------------------------------------------------------------
# Simulation descriptor extraction


def _child(collection: Collection, id_short: str) -> SubmodelElement | None:
    for element in collection.children:
        if element.id_short == id_short:
            return element
    return None


def _required_property(collection: Collection, id_short: str, path: str) -> Property:
    element = _child(collection, id_short)
    if element is None:
        raise SchemaError(f"missing {id_short}", path=path)
    if not isinstance(element, Property):
        raise SchemaError(f"{id_short} must be a property", path=f"{path}/{id_short}")
    return element


def _string_value(collection: Collection, id_short: str, path: str) -> str:
    prop = _required_property(collection, id_short, path)
    if not isinstance(prop.value, str) or not prop.value:
        raise SchemaError(f"{id_short} must be a non-empty string", path=f"{path}/{id_short}")
    return prop.value


def _number_value(collection: Collection, id_short: str, path: str) -> float:
    prop = _required_property(collection, id_short, path)
    if isinstance(prop.value, bool) or not isinstance(prop.value, (int, float)):
        raise SchemaError(f"{id_short} must be a number", path=f"{path}/{id_short}")
    return float(prop.value)


def _enum_value(collection: Collection, id_short: str, enum_cls, path: str):
    raw = _string_value(collection, id_short, path)
    try:
        return enum_cls(raw)
    except ValueError:
        raise SchemaError(
            f"{id_short} must be one of {[m.value for m in enum_cls]}, got {raw!r}",
            path=f"{path}/{id_short}",
        ) from None


def _json_list_value(collection: Collection, id_short: str, path: str) -> list:
    raw = _string_value(collection, id_short, path)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        raise SchemaError(
            f"{id_short} must be a JSON-encoded list", path=f"{path}/{id_short}"
        ) from None
    if not isinstance(value, list):
        raise SchemaError(f"{id_short} must encode a list", path=f"{path}/{id_short}")
    return value


def _parse_port(element: SubmodelElement, path: str) -> Port:
    if not isinstance(element, Collection):
        raise SchemaError("port entry must be a collection", path=path)
    here = f"{path}/{element.id_short}"
    name = _string_value(element, "Name", here)
    direction = _enum_value(element, "Direction", Direction, here)
    quantity = _string_value(element, "Quantity", here)
    unit = _string_value(element, "Unit", here)
    range_min = _number_value(element, "Min", here)
    range_max = _number_value(element, "Max", here)
    datatype = _enum_value(element, "Datatype", Datatype, here)
    if range_min > range_max:
        raise SchemaError(
            f"port {name!r} range is inverted: min {range_min} > max {range_max}",
            path=here,
        )
    return Port(name, direction, quantity, unit, range_min, range_max, datatype)


def _parse_surrogate(element: SubmodelElement, ports: tuple[Port, ...], path: str) -> SurrogateSpec:
    if not isinstance(element, Collection):
        raise SchemaError("Surrogate must be a collection", path=path)
    here = f"{path}/Surrogate"
    inputs = _json_list_value(element, "Inputs", here)
    outputs = _json_list_value(element, "Outputs", here)
    matrix = _json_list_value(element, "A", here)
    offset = _json_list_value(element, "b", here)

    by_name = {p.name: p for p in ports}
    for name in inputs:
        port = by_name.get(name)
        if port is None or port.direction is not Direction.INPUT:
            raise SchemaError(f"surrogate input {name!r} is not an input port", path=here)
    for name in outputs:
        port = by_name.get(name)
        if port is None or port.direction is not Direction.OUTPUT:
            raise SchemaError(f"surrogate output {name!r} is not an output port", path=here)

    if len(matrix) != len(outputs):
        raise SchemaError(
            f"surrogate matrix has {len(matrix)} rows for {len(outputs)} outputs", path=here
        )
    rows = []
    for row in matrix:
        if not isinstance(row, list) or len(row) != len(inputs):
            raise SchemaError(
                f"surrogate matrix rows must have {len(inputs)} columns", path=here
            )
        rows.append(tuple(float(x) for x in row))
    if len(offset) != len(outputs):
        raise SchemaError(
            f"surrogate offset has {len(offset)} entries for {len(outputs)} outputs",
            path=here,
        )
    return SurrogateSpec(
        inputs=tuple(inputs),
        outputs=tuple(outputs),
        matrix=tuple(rows),
        offset=tuple(float(x) for x in offset),
    )


def _parse_model_entry(shell: AdministrationShell, element: SubmodelElement, path: str) -> SimulationModelDescriptor:
    if not isinstance(element, Collection):
        raise SchemaError("model entry must be a collection", path=path)
    here = f"{path}/{element.id_short}"

    model_id = _string_value(element, "ModelId", here)
    storage = _string_value(element, "StorageLocation", here)
    environment = _string_value(element, "SimulationEnvironment", here)

    solver_el = _child(element, "Solver")
    if not isinstance(solver_el, Collection):
        raise SchemaError("missing Solver collection", path=here)
    solver_path = f"{here}/Solver"
    step_size = _number_value(solver_el, "StepSize", solver_path)
    tolerance = _number_value(solver_el, "Tolerance", solver_path)
    if step_size <= 0 or tolerance <= 0:
        raise SchemaError("solver StepSize and Tolerance must be > 0", path=solver_path)
    solver = SolverSpec(_string_value(solver_el, "Method", solver_path), step_size, tolerance)

    parameters = []
    params_el = _child(element, "Parameters")
    if params_el is not None:
        if not isinstance(params_el, Collection):
            raise SchemaError("Parameters must be a collection", path=here)
        for child in params_el.children:
            if not isinstance(child, Property):
                raise SchemaError(
                    "parameter entries must be properties", path=f"{here}/Parameters"
                )
            if isinstance(child.value, bool) or not isinstance(child.value, (int, float)):
                raise SchemaError(
                    f"parameter {child.id_short!r} must be numeric",
                    path=f"{here}/Parameters/{child.id_short}",
                )
            parameters.append(
                Parameter(child.id_short, float(child.value), child.unit or "-")
            )

    ports_el = _child(element, "Ports")
    if not isinstance(ports_el, Collection) or not ports_el.children:
        raise SchemaError("model entry needs a non-empty Ports collection", path=here)
    ports = tuple(_parse_port(p, f"{here}/Ports") for p in ports_el.children)
    names = [p.name for p in ports]
    if len(set(names)) != len(names):
        raise SchemaError("port names must be unique within a model", path=f"{here}/Ports")

    level = _enum_value(element, "LevelOfDetail", LevelOfDetail, here)
    discipline = _string_value(element, "Discipline", here)
    decision = _enum_value(element, "DecisionLevel", DecisionLevel, here)
    computing_time = _number_value(element, "ComputingTime", here)
    if computing_time < 0:
        raise SchemaError("ComputingTime must be >= 0", path=f"{here}/ComputingTime")
    accuracy = _number_value(element, "Accuracy", here)
    if not 0.0 <= accuracy <= 1.0:
        raise SchemaError("Accuracy must be in [0, 1]", path=f"{here}/Accuracy")

    surrogate = None
    surrogate_el = _child(element, "Surrogate")
    if surrogate_el is not None:
        surrogate = _parse_surrogate(surrogate_el, ports, here)

    return SimulationModelDescriptor(
        model_id=model_id,
        owner_asset_id=shell.id,
        storage_location=storage,
        simulation_environment=environment,
        solver=solver,
        parameters=tuple(parameters),
        ports=ports,
        level_of_detail=level,
        discipline=discipline,
        decision_level=decision,
        computing_time_estimate=computing_time,
        accuracy_score=accuracy,
        surrogate=surrogate,
    )


def extract_simulation_descriptors(shell: AdministrationShell) -> tuple[SimulationModelDescriptor, ...]:
    """Read every model entry of the simulation submodel into a descriptor.

    Shells without a simulation submodel yield an empty tuple. Any entry
    violating a descriptor invariant raises SchemaError with its path.
    """
    submodel = shell.submodel_of_kind(KIND_SIMULATION)
    if submodel is None:
        return ()
    descriptors = []
    seen_ids: set[str] = set()
    for element in submodel.elements:
        descriptor = _parse_model_entry(shell, element, submodel.id_short)
        if descriptor.model_id in seen_ids:
            raise SchemaError(
                f"duplicate model id {descriptor.model_id!r}",
                path=f"{submodel.id_short}/{element.id_short}",
            )
        seen_ids.add(descriptor.model_id)
        descriptors.append(descriptor)
    return tuple(descriptors)


# ---------------------------------------------------------------------------
# Bill of material extraction


def extract_bom(shell: AdministrationShell) -> tuple[str, ...]:
    """Child asset ids referenced by the bill-of-material submodel, in order.

    Returns an empty tuple when the shell has no BOM submodel; requires the
    archetype property to be "Full" (hierarchy described at the asset itself).
    """
    submodel = shell.submodel_of_kind(KIND_BILL_OF_MATERIAL)
    if submodel is None:
        return ()
    archetype = _child(Collection(submodel.id_short, submodel.elements), "Archetype")
    if not isinstance(archetype, Property) or archetype.value != "Full":
        value = archetype.value if isinstance(archetype, Property) else None
        raise SchemaError(
            f"BOM archetype must be \"Full\", got {value!r}",
            path=f"{submodel.id_short}/Archetype",
        )
    return tuple(
        el.target for el in submodel.elements if isinstance(el, Reference)
    )
