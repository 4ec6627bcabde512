"""Model adaption loop: deviation metric, configuration selection, policy.

The loop compares simulated against measured behavior over a sliding
window, condenses the mismatch into one aggregate deviation, and reacts in
three escalating stages: keep the configuration, reparameterize the
offending model's affine surrogate by least squares, or reselect a whole
configuration from the knowledge graph with the offender excluded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .aas import DecisionLevel, SurrogateSpec, SimulationModelDescriptor
from .errors import (
    ConsistencyError,
    DegenerateFitError,
    EmptyWindowError,
    InfeasibleError,
    MissingInputError,
    NoSurrogateError,
    OutOfRangeError,
    SignalMismatchError,
    ValidationError,
)
from .kgraph import EdgeKind, KnowledgeGraph, NodeKind, model_node_id
from .util import canonical_json

RMS_FLOOR = 1e-9


# ---------------------------------------------------------------------------
# Telemetry and deviation


@dataclass(frozen=True)
class TelemetrySeries:
    """One named signal as (timestamp, value) samples, timestamps ascending."""

    signal_name: str
    timestamps: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.timestamps) != len(self.values):
            raise ValidationError(
                f"signal {self.signal_name!r}: {len(self.timestamps)} timestamps "
                f"vs {len(self.values)} values"
            )
        if any(b <= a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ValidationError(
                f"signal {self.signal_name!r}: timestamps must be strictly increasing"
            )

    @classmethod
    def from_pairs(cls, signal_name: str, samples: Sequence[tuple[float, float]]) -> "TelemetrySeries":
        return cls(
            signal_name,
            tuple(float(t) for t, _ in samples),
            tuple(float(v) for _, v in samples),
        )


@dataclass(frozen=True)
class DeviationReport:
    per_signal: dict[str, float]
    aggregate: float
    window_seconds: float

    def to_dict(self) -> dict:
        return {
            "perSignal": dict(sorted(self.per_signal.items())),
            "aggregate": self.aggregate,
            "windowSeconds": self.window_seconds,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def compute_deviation(
    simulated: Sequence[TelemetrySeries],
    measured: Sequence[TelemetrySeries],
    window_seconds: float,
) -> DeviationReport:
    """Normalized windowed RMS deviation per signal, aggregated by max.

    The window is anchored at each signal's last simulated timestamp.
    Measured values are linearly interpolated at the simulated timestamps;
    per signal the deviation is RMS(sim - meas) / max(RMS(meas), 1e-9).
    """
    if window_seconds <= 0:
        raise ValidationError("window must be positive")
    sim_names = {s.signal_name for s in simulated}
    meas_names = {m.signal_name for m in measured}
    if sim_names != meas_names:
        raise SignalMismatchError(
            "simulated and measured signal names differ: "
            f"only-simulated {sorted(sim_names - meas_names)}, "
            f"only-measured {sorted(meas_names - sim_names)}"
        )
    if not sim_names:
        raise SignalMismatchError("no signals to compare")
    meas_by_name = {m.signal_name: m for m in measured}

    per_signal: dict[str, float] = {}
    for sim in sorted(simulated, key=lambda s: s.signal_name):
        meas = meas_by_name[sim.signal_name]
        if not sim.timestamps:
            raise EmptyWindowError(f"signal {sim.signal_name!r}: no simulated samples")
        t_end = sim.timestamps[-1]
        t_start = t_end - window_seconds
        sim_t = np.asarray(sim.timestamps)
        sim_v = np.asarray(sim.values)
        inside = (sim_t >= t_start) & (sim_t <= t_end)
        if int(inside.sum()) < 2:
            raise EmptyWindowError(
                f"signal {sim.signal_name!r}: {int(inside.sum())} simulated sample(s) in window"
            )
        meas_t = np.asarray(meas.timestamps)
        meas_inside = int(((meas_t >= t_start) & (meas_t <= t_end)).sum())
        if meas_inside < 2:
            raise EmptyWindowError(
                f"signal {sim.signal_name!r}: {meas_inside} measured sample(s) in window"
            )
        t = sim_t[inside]
        s = sim_v[inside]
        m = np.interp(t, meas_t, np.asarray(meas.values))
        rms_diff = float(np.sqrt(np.mean((s - m) ** 2)))
        rms_meas = float(np.sqrt(np.mean(m**2)))
        value = rms_diff / max(rms_meas, RMS_FLOOR)
        if not math.isfinite(value):
            raise ValidationError(f"signal {sim.signal_name!r}: non-finite deviation")
        per_signal[sim.signal_name] = value

    return DeviationReport(per_signal, max(per_signal.values()), window_seconds)


# ---------------------------------------------------------------------------
# Surrogate execution and refitting


@dataclass(frozen=True)
class SurrogateEvaluation:
    values: dict[str, float]
    clamped: tuple[str, ...]


def evaluate_surrogate(
    descriptor: SimulationModelDescriptor,
    inputs: Mapping[str, float],
    *,
    strict: bool = False,
) -> SurrogateEvaluation:
    """Run the affine surrogate: outputs = A @ inputs + b, ranges enforced.

    Out-of-range values raise OutOfRange in strict mode; otherwise they are
    clamped to the declared port range and the port is listed in `clamped`.
    """
    surrogate = descriptor.surrogate
    if surrogate is None:
        raise NoSurrogateError(f"model {descriptor.model_id!r} has no surrogate")
    clamped: list[str] = []
    x = []
    for name in surrogate.inputs:
        if name not in inputs:
            raise MissingInputError(
                f"model {descriptor.model_id!r}: input port {name!r} not supplied"
            )
        value = float(inputs[name])
        port = descriptor.port(name)
        if port is not None and not (port.range_min <= value <= port.range_max):
            if strict:
                raise OutOfRangeError(
                    f"model {descriptor.model_id!r}: input {name!r} = {value} outside "
                    f"[{port.range_min}, {port.range_max}]"
                )
            value = min(max(value, port.range_min), port.range_max)
            clamped.append(name)
        x.append(value)

    a = np.asarray(surrogate.matrix, dtype=float).reshape(len(surrogate.outputs), len(surrogate.inputs))
    y = a @ np.asarray(x, dtype=float) + np.asarray(surrogate.offset, dtype=float)

    values: dict[str, float] = {}
    for name, raw in zip(surrogate.outputs, y):
        value = float(raw)
        port = descriptor.port(name)
        if port is not None and not (port.range_min <= value <= port.range_max):
            if strict:
                raise OutOfRangeError(
                    f"model {descriptor.model_id!r}: output {name!r} = {value} outside "
                    f"[{port.range_min}, {port.range_max}]"
                )
            value = min(max(value, port.range_min), port.range_max)
            clamped.append(name)
        values[name] = value
    return SurrogateEvaluation(values, tuple(clamped))


@dataclass(frozen=True)
class WindowSamples:
    """Per-model window data for refitting: one series per port name."""

    inputs: dict[str, tuple[float, ...]]
    outputs: dict[str, tuple[float, ...]]


def refit_affine(
    inputs: Sequence[str],
    outputs: Sequence[str],
    window: WindowSamples,
) -> tuple[tuple[tuple[float, ...], ...], tuple[float, ...]]:
    """Least-squares refit of A, b from windowed (input, measured output) pairs."""
    lengths = {len(v) for v in window.inputs.values()} | {len(v) for v in window.outputs.values()}
    if len(lengths) > 1:
        raise ValidationError(f"window series lengths differ: {sorted(lengths)}")
    n = lengths.pop() if lengths else 0
    for name in inputs:
        if name not in window.inputs:
            raise MissingInputError(f"window lacks input series {name!r}")
    for name in outputs:
        if name not in window.outputs:
            raise MissingInputError(f"window lacks output series {name!r}")

    k = len(inputs)
    x = np.ones((n, k + 1))
    for col, name in enumerate(inputs):
        x[:, col] = window.inputs[name]
    y = np.column_stack([window.outputs[name] for name in outputs]) if outputs else np.zeros((n, 0))

    solution, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank < k + 1:
        raise DegenerateFitError(
            f"least squares is rank-deficient (rank {rank} < {k + 1}); "
            "window inputs do not span the surrogate's input space"
        )
    a = solution[:k].T
    b = solution[k]
    return (
        tuple(tuple(float(v) for v in row) for row in a),
        tuple(float(v) for v in b),
    )


# ---------------------------------------------------------------------------
# Configuration selection


@dataclass(frozen=True)
class Budget:
    max_computing_time: float = math.inf
    min_accuracy: float = 0.0


@dataclass(frozen=True)
class Thresholds:
    epsilon: float = 0.05
    escalation: float = 4.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        if self.escalation <= 1:
            raise ValidationError("escalation must exceed 1")


@dataclass(frozen=True)
class ModelConfiguration:
    system_id: str
    selection: dict[str, str]
    bindings: tuple[tuple[str, str], ...]
    total_computing_time: float
    min_accuracy: float

    def to_dict(self) -> dict:
        return {
            "systemId": self.system_id,
            "selection": dict(self.selection),
            "bindings": [{"outPort": s, "inPort": d} for s, d in self.bindings],
            "totalComputingTime": self.total_computing_time,
            "minAccuracy": self.min_accuracy,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def configuration_from_dict(obj) -> ModelConfiguration:
    """Inverse of ModelConfiguration.to_dict, for reloading artifacts."""
    try:
        bindings = tuple(
            (str(b["outPort"]), str(b["inPort"])) for b in obj.get("bindings", [])
        )
        return ModelConfiguration(
            system_id=str(obj["systemId"]),
            selection={str(k): str(v) for k, v in obj["selection"].items()},
            bindings=bindings,
            total_computing_time=float(obj["totalComputingTime"]),
            min_accuracy=float(obj["minAccuracy"]),
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValidationError(f"malformed configuration object: {exc}") from exc


def _model_entry(graph: KnowledgeGraph, node_id: str) -> dict:
    return graph.node(node_id).properties


def select_configuration(
    graph: KnowledgeGraph,
    level: DecisionLevel,
    budget: Budget | None = None,
    exclude: frozenset[str] | set[str] = frozenset(),
) -> ModelConfiguration:
    """Pick one model per sequence asset by backtracking search.

    Feasibility: every input port of a chosen model is either exogenous
    (no incoming connectsWith edge anywhere in the graph) or fed by a
    connectsWith edge whose source model is also chosen; models of the
    first sequence asset are exempt. The budget caps total computing time
    and floors per-model accuracy. Objective: maximize the minimum
    accuracy, then minimize total computing time, then the lexicographically
    smallest model-id vector.
    """
    budget = budget or Budget()
    sequence = graph.sequence_steps()
    if not sequence:
        raise ConsistencyError("graph declares no production sequence")
    system = graph.production_system()

    candidates: list[list[str]] = []
    for asset_id in sequence:
        models = []
        for node_id in graph.models_of_asset(asset_id):
            props = _model_entry(graph, node_id)
            if props["decisionLevel"] != level.value:
                continue
            if props["modelId"] in exclude:
                continue
            models.append(node_id)
        models.sort(key=lambda nid: _model_entry(graph, nid)["modelId"])
        if not models:
            raise InfeasibleError(
                f"asset {asset_id!r} has no candidate models at decision level "
                f"{level.value!r}" + (f" outside the excluded set {sorted(exclude)}" if exclude else "")
            )
        candidates.append(models)

    def inputs_satisfied(node_id: str, chosen: set[str]) -> str | None:
        for port_node in graph.ports_of_model(node_id):
            props = graph.node(port_node).properties
            if props["direction"] != "input":
                continue
            incoming = graph.edges(EdgeKind.CONNECTS_WITH, dst=port_node)
            if not incoming:
                continue
            if not any(graph.model_of_port(e.src) in chosen for e in incoming):
                return props["name"]
        return None

    best: tuple[float, float, tuple[str, ...]] | None = None
    best_nodes: list[str] | None = None
    ever_advanced = [False] * len(sequence)
    notes: dict[int, str] = {}

    def search(depth: int, chosen_nodes: list[str], chosen_set: set[str], time_used: float):
        nonlocal best, best_nodes
        if depth == len(sequence):
            accuracies = [_model_entry(graph, n)["accuracy"] for n in chosen_nodes]
            ids = tuple(_model_entry(graph, n)["modelId"] for n in chosen_nodes)
            key = (-min(accuracies), time_used, ids)
            if best is None or key < best:
                best = key
                best_nodes = list(chosen_nodes)
            return
        for node_id in candidates[depth]:
            props = _model_entry(graph, node_id)
            if props["accuracy"] < budget.min_accuracy:
                notes.setdefault(depth, f"accuracy {props['accuracy']} below floor {budget.min_accuracy}")
                continue
            if time_used + props["computingTime"] > budget.max_computing_time:
                notes.setdefault(depth, f"computing time exceeds budget {budget.max_computing_time}")
                continue
            if depth > 0:
                unbound = inputs_satisfied(node_id, chosen_set)
                if unbound is not None:
                    notes.setdefault(depth, f"input port {unbound!r} unbound")
                    continue
            ever_advanced[depth] = True
            chosen_nodes.append(node_id)
            chosen_set.add(node_id)
            search(depth + 1, chosen_nodes, chosen_set, time_used + props["computingTime"])
            chosen_set.remove(node_id)
            chosen_nodes.pop()

    search(0, [], set(), 0.0)

    if best_nodes is None:
        # The first depth that never advanced is the blocker; everything
        # before it had at least one workable candidate.
        depth = ever_advanced.index(False)
        reason = notes.get(depth, "all candidates rejected")
        raise InfeasibleError(f"asset {sequence[depth]!r}: {reason}")

    selection = {
        asset_id: _model_entry(graph, node_id)["modelId"]
        for asset_id, node_id in zip(sequence, best_nodes)
    }
    chosen = set(best_nodes)
    bindings = sorted(
        (e.src, e.dst)
        for e in graph.edges(EdgeKind.CONNECTS_WITH)
        if graph.model_of_port(e.src) in chosen and graph.model_of_port(e.dst) in chosen
    )
    accuracies = [_model_entry(graph, n)["accuracy"] for n in best_nodes]
    times = [_model_entry(graph, n)["computingTime"] for n in best_nodes]
    return ModelConfiguration(
        system_id=system.properties["systemId"],
        selection=selection,
        bindings=tuple(bindings),
        total_computing_time=float(sum(times)),
        min_accuracy=float(min(accuracies)),
    )


# ---------------------------------------------------------------------------
# Adaption policy


class AdaptionVerdict(str, Enum):
    KEEP = "keep"
    REPARAMETERIZE = "reparameterize"
    RESELECT = "reselect"


@dataclass(frozen=True)
class AdaptionDecision:
    verdict: AdaptionVerdict
    rationale: str
    offender: str | None = None
    new_parameters: SurrogateSpec | None = None
    new_configuration: ModelConfiguration | None = None

    def to_dict(self) -> dict:
        obj: dict = {"verdict": self.verdict.value, "rationale": self.rationale}
        if self.offender is not None:
            obj["offender"] = self.offender
        if self.new_parameters is not None:
            obj["newParameters"] = {
                "A": [list(row) for row in self.new_parameters.matrix],
                "b": list(self.new_parameters.offset),
                "inputs": list(self.new_parameters.inputs),
                "outputs": list(self.new_parameters.outputs),
            }
        if self.new_configuration is not None:
            obj["newConfiguration"] = self.new_configuration.to_dict()
        return obj


def signal_owner(selection: Mapping[str, str], signal_name: str) -> str | None:
    """Asset owning a "{assetId}.{portName}" signal; longest prefix wins."""
    owner = None
    for asset_id in selection:
        if signal_name.startswith(asset_id + "."):
            if owner is None or len(asset_id) > len(owner):
                owner = asset_id
    return owner


def adapt(
    graph: KnowledgeGraph,
    current: ModelConfiguration,
    deviation: DeviationReport,
    thresholds: Thresholds,
    windows: Mapping[str, WindowSamples] | None = None,
    *,
    level: DecisionLevel | None = None,
    budget: Budget | None = None,
) -> AdaptionDecision:
    """Decide keep / reparameterize / reselect from an observed deviation.

    Mutates the graph's runtime knowledge: every selected model's
    evaluationCount is bumped, and models owning compared signals get their
    lastDeviation updated. A rank-deficient refit falls back to reselect.
    """
    windows = windows or {}
    selected_nodes = {
        asset_id: model_node_id(model_id) for asset_id, model_id in current.selection.items()
    }
    for node_id in selected_nodes.values():
        if not graph.has_node(node_id):
            raise ConsistencyError(f"configuration references unknown model node {node_id!r}")

    owned: dict[str, float] = {}
    for signal, value in deviation.per_signal.items():
        asset_id = signal_owner(current.selection, signal)
        if asset_id is None:
            continue
        model_id = current.selection[asset_id]
        owned[model_id] = max(owned.get(model_id, 0.0), value)

    for asset_id, node_id in sorted(selected_nodes.items()):
        props = graph.node(node_id).properties
        graph.set_node_property(node_id, "evaluationCount", props.get("evaluationCount", 0) + 1)
        model_id = current.selection[asset_id]
        if model_id in owned:
            graph.set_node_property(node_id, "lastDeviation", owned[model_id])

    aggregate = deviation.aggregate
    epsilon = thresholds.epsilon
    if aggregate <= epsilon:
        return AdaptionDecision(
            AdaptionVerdict.KEEP,
            f"aggregate deviation {aggregate:.6g} within tolerance {epsilon:.6g}",
        )

    top_signal = min(deviation.per_signal, key=lambda s: (-deviation.per_signal[s], s))
    offender_asset = signal_owner(current.selection, top_signal)
    if offender_asset is None:
        raise SignalMismatchError(
            f"signal {top_signal!r} does not belong to any selected asset"
        )
    offender = current.selection[offender_asset]
    offender_node = selected_nodes[offender_asset]

    if level is None:
        levels = {
            graph.node(n).properties["decisionLevel"] for n in selected_nodes.values()
        }
        if len(levels) != 1:
            raise ValidationError(
                f"selected models span decision levels {sorted(levels)}; pass one explicitly"
            )
        level = DecisionLevel(levels.pop())

    def reselect(reason: str) -> AdaptionDecision:
        configuration = select_configuration(
            graph, level, budget, exclude=frozenset({offender})
        )
        return AdaptionDecision(
            AdaptionVerdict.RESELECT,
            reason,
            offender=offender,
            new_configuration=configuration,
        )

    if aggregate > thresholds.escalation * epsilon:
        return reselect(
            f"aggregate deviation {aggregate:.6g} beyond escalation bound "
            f"{thresholds.escalation * epsilon:.6g}; offender {offender!r} excluded"
        )

    surrogate_props = graph.node(offender_node).properties.get("surrogate")
    if surrogate_props is None:
        return reselect(
            f"deviation {aggregate:.6g} asks for reparameterization but model "
            f"{offender!r} has no refittable surrogate; reselecting instead"
        )
    window = windows.get(offender)
    if window is None:
        raise EmptyWindowError(f"no window samples supplied for model {offender!r}")
    try:
        matrix, offset = refit_affine(
            surrogate_props["inputs"], surrogate_props["outputs"], window
        )
    except DegenerateFitError as exc:
        return reselect(f"refit of {offender!r} failed ({exc.message}); reselecting instead")
    spec = SurrogateSpec(
        inputs=tuple(surrogate_props["inputs"]),
        outputs=tuple(surrogate_props["outputs"]),
        matrix=matrix,
        offset=offset,
    )
    return AdaptionDecision(
        AdaptionVerdict.REPARAMETERIZE,
        f"aggregate deviation {aggregate:.6g} within escalation bound; "
        f"refit surrogate of {offender!r} on {len(next(iter(window.inputs.values()), ()))} samples",
        offender=offender,
        new_parameters=spec,
    )
