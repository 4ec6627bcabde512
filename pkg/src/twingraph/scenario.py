"""Closed-loop simulation at desk scale.

A scenario file supplies the exogenous input signals and a "true process"
per asset (an affine map that may drift between windows). Each window the
loop evaluates the selected surrogates against the true process, computes
the deviation report, and hands it to the adaption policy; reparameterized
surrogates and reselected configurations take effect in the next window.
Everything is deterministic: same scenario, same byte-identical log.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .adaption import (
    AdaptionVerdict,
    Budget,
    ModelConfiguration,
    TelemetrySeries,
    Thresholds,
    WindowSamples,
    adapt,
    compute_deviation,
)
from .aas import DecisionLevel
from .errors import (
    DocumentSyntaxError,
    MissingInputError,
    NoSurrogateError,
    ValidationError,
)
from .kgraph import EdgeKind, KnowledgeGraph, model_node_id


@dataclass(frozen=True)
class ConstantSignal:
    value: float

    def value_at(self, t: float) -> float:
        return self.value


@dataclass(frozen=True)
class RampSignal:
    start: float
    slope: float

    def value_at(self, t: float) -> float:
        return self.start + self.slope * t


@dataclass(frozen=True)
class SampledSignal:
    timestamps: tuple[float, ...]
    values: tuple[float, ...]

    def value_at(self, t: float) -> float:
        return float(np.interp(t, self.timestamps, self.values))


ExogenousSignal = Union[ConstantSignal, RampSignal, SampledSignal]


@dataclass(frozen=True)
class DriftStep:
    from_window: int
    matrix: tuple[tuple[float, ...], ...] | None
    offset: tuple[float, ...] | None


@dataclass(frozen=True)
class TrueProcessEntry:
    """Ground-truth affine map of one asset, with scheduled drift."""

    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    matrix: tuple[tuple[float, ...], ...]
    offset: tuple[float, ...]
    drift: tuple[DriftStep, ...] = ()

    def params_at(self, window: int) -> tuple[np.ndarray, np.ndarray]:
        a = np.asarray(self.matrix, dtype=float).reshape(len(self.outputs), len(self.inputs))
        b = np.asarray(self.offset, dtype=float)
        for step in self.drift:
            if step.from_window <= window:
                if step.matrix is not None:
                    a = np.asarray(step.matrix, dtype=float).reshape(a.shape)
                if step.offset is not None:
                    b = np.asarray(step.offset, dtype=float)
        return a, b


@dataclass(frozen=True)
class Scenario:
    sample_interval: float
    samples_per_window: int
    windows: int
    thresholds: Thresholds
    exogenous: dict[str, ExogenousSignal]
    true_process: dict[str, TrueProcessEntry]

    @property
    def window_seconds(self) -> float:
        return (self.samples_per_window - 1) * self.sample_interval


def _require(obj: Mapping, key: str, where: str):
    if key not in obj:
        raise ValidationError(f"{where}: missing {key!r}")
    return obj[key]


def _as_matrix(obj, n_out: int, n_in: int, where: str) -> tuple[tuple[float, ...], ...]:
    if (
        not isinstance(obj, list)
        or len(obj) != n_out
        or any(not isinstance(row, list) or len(row) != n_in for row in obj)
    ):
        raise ValidationError(f"{where}: A must be a {n_out}x{n_in} matrix")
    try:
        return tuple(tuple(float(v) for v in row) for row in obj)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: non-numeric matrix entry") from exc


def _as_vector(obj, n: int, where: str) -> tuple[float, ...]:
    if not isinstance(obj, list) or len(obj) != n:
        raise ValidationError(f"{where}: b must be a vector of length {n}")
    try:
        return tuple(float(v) for v in obj)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: non-numeric vector entry") from exc


def _parse_signal(obj, where: str) -> ExogenousSignal:
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: signal must be an object")
    kind = obj.get("kind")
    if kind == "constant":
        return ConstantSignal(float(_require(obj, "value", where)))
    if kind == "ramp":
        return RampSignal(float(_require(obj, "start", where)), float(_require(obj, "slope", where)))
    if kind == "samples":
        timestamps = _require(obj, "timestamps", where)
        values = _require(obj, "values", where)
        if (
            not isinstance(timestamps, list)
            or not isinstance(values, list)
            or not timestamps
            or len(timestamps) != len(values)
        ):
            raise ValidationError(f"{where}: timestamps/values must be equal-length non-empty lists")
        ts = tuple(float(t) for t in timestamps)
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValidationError(f"{where}: timestamps must be strictly increasing")
        return SampledSignal(ts, tuple(float(v) for v in values))
    raise ValidationError(f"{where}: unknown signal kind {kind!r}")


def _parse_true_entry(asset_id: str, obj) -> TrueProcessEntry:
    where = f"trueProcess[{asset_id}]"
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: must be an object")
    inputs = _require(obj, "inputs", where)
    outputs = _require(obj, "outputs", where)
    if not isinstance(inputs, list) or not all(isinstance(n, str) for n in inputs):
        raise ValidationError(f"{where}: inputs must be a list of port names")
    if not isinstance(outputs, list) or not outputs or not all(isinstance(n, str) for n in outputs):
        raise ValidationError(f"{where}: outputs must be a non-empty list of port names")
    matrix = _as_matrix(_require(obj, "A", where), len(outputs), len(inputs), where)
    offset = _as_vector(_require(obj, "b", where), len(outputs), where)
    drift: list[DriftStep] = []
    for i, step in enumerate(obj.get("drift", [])):
        step_where = f"{where}.drift[{i}]"
        if not isinstance(step, dict):
            raise ValidationError(f"{step_where}: must be an object")
        window = _require(step, "fromWindow", step_where)
        if not isinstance(window, int) or window < 0:
            raise ValidationError(f"{step_where}: fromWindow must be a non-negative integer")
        step_a = None
        if "A" in step:
            step_a = _as_matrix(step["A"], len(outputs), len(inputs), step_where)
        step_b = None
        if "b" in step:
            step_b = _as_vector(step["b"], len(outputs), step_where)
        if step_a is None and step_b is None:
            raise ValidationError(f"{step_where}: needs A or b")
        drift.append(DriftStep(window, step_a, step_b))
    drift.sort(key=lambda s: s.from_window)
    return TrueProcessEntry(tuple(inputs), tuple(outputs), matrix, offset, tuple(drift))


def load_scenario(text: str) -> Scenario:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentSyntaxError(f"malformed scenario file: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValidationError("scenario must be a JSON object")
    interval = float(_require(obj, "sampleInterval", "scenario"))
    if interval <= 0:
        raise ValidationError("sampleInterval must be positive")
    samples = _require(obj, "samplesPerWindow", "scenario")
    if not isinstance(samples, int) or samples < 2:
        raise ValidationError("samplesPerWindow must be an integer >= 2")
    windows = _require(obj, "windows", "scenario")
    if not isinstance(windows, int) or windows < 1:
        raise ValidationError("windows must be a positive integer")
    thresholds_obj = obj.get("thresholds", {})
    if not isinstance(thresholds_obj, dict):
        raise ValidationError("thresholds must be an object")
    thresholds = Thresholds(
        epsilon=float(thresholds_obj.get("epsilon", 0.05)),
        escalation=float(thresholds_obj.get("escalation", 4.0)),
    )
    exogenous = {
        str(name): _parse_signal(spec, f"exogenous[{name}]")
        for name, spec in obj.get("exogenous", {}).items()
    }
    true_process = {
        str(asset): _parse_true_entry(asset, entry)
        for asset, entry in obj.get("trueProcess", {}).items()
    }
    return Scenario(interval, samples, windows, thresholds, exogenous, true_process)


# ---------------------------------------------------------------------------
# Closed loop


def _live_surrogate(graph: KnowledgeGraph, model_id: str) -> dict:
    props = graph.node(model_node_id(model_id)).properties
    spec = props.get("surrogate")
    if spec is None:
        raise NoSurrogateError(f"model {model_id!r} has no surrogate to simulate")
    n_out, n_in = len(spec["outputs"]), len(spec["inputs"])
    return {
        "inputs": tuple(spec["inputs"]),
        "outputs": tuple(spec["outputs"]),
        "a": np.asarray(spec["A"], dtype=float).reshape(n_out, n_in),
        "b": np.asarray(spec["b"], dtype=float),
    }


def _routes(graph: KnowledgeGraph, selection: Mapping[str, str]) -> dict:
    """(assetId, inPortName) -> [(srcAssetId, srcPortName, factor)], selected models only."""
    node_to_asset = {model_node_id(mid): aid for aid, mid in selection.items()}
    routes: dict[tuple[str, str], list[tuple[str, str, float]]] = {}
    for edge in graph.edges(EdgeKind.CONNECTS_WITH):
        src_model = graph.model_of_port(edge.src)
        dst_model = graph.model_of_port(edge.dst)
        if src_model not in node_to_asset or dst_model not in node_to_asset:
            continue
        src_port = graph.node(edge.src).properties["name"]
        dst_port = graph.node(edge.dst).properties["name"]
        key = (node_to_asset[dst_model], dst_port)
        routes.setdefault(key, []).append(
            (node_to_asset[src_model], src_port, edge.properties["conversionFactor"])
        )
    return routes


def run_closed_loop(
    graph: KnowledgeGraph,
    configuration: ModelConfiguration,
    scenario: Scenario,
    *,
    level: DecisionLevel | None = None,
    budget: Budget | None = None,
) -> list[dict]:
    """Run all scenario windows; one decision record per window.

    The caller's graph is left untouched; runtime knowledge updates happen
    on an internal copy.
    """
    graph = graph.copy()
    sequence = graph.sequence_steps()
    config = configuration
    live = {mid: _live_surrogate(graph, mid) for mid in config.selection.values()}

    # Ground truth is fixed per asset for the whole run: the scenario entry,
    # or the initially selected model's surrogate for assets without one.
    truth: dict[str, TrueProcessEntry] = {}
    for asset_id in sequence:
        entry = scenario.true_process.get(asset_id)
        if entry is None:
            spec = live[config.selection[asset_id]]
            entry = TrueProcessEntry(
                spec["inputs"],
                spec["outputs"],
                tuple(tuple(float(v) for v in row) for row in spec["a"]),
                tuple(float(v) for v in spec["b"]),
            )
        truth[asset_id] = entry

    records: list[dict] = []
    for window in range(scenario.windows):
        routes = _routes(graph, config.selection)
        true_params = {aid: truth[aid].params_at(window) for aid in sequence}
        for asset_id in sequence:
            surrogate = live[config.selection[asset_id]]
            missing = set(surrogate["outputs"]) - set(truth[asset_id].outputs)
            if missing:
                raise ValidationError(
                    f"asset {asset_id!r}: surrogate outputs {sorted(missing)} have no "
                    "ground truth in the scenario"
                )

        sim_series: dict[str, list[float]] = {}
        meas_series: dict[str, list[float]] = {}
        sample_inputs: dict[str, dict[str, list[float]]] = {
            mid: {name: [] for name in live[mid]["inputs"]} for mid in config.selection.values()
        }
        sample_outputs: dict[str, dict[str, list[float]]] = {
            mid: {name: [] for name in live[mid]["outputs"]} for mid in config.selection.values()
        }
        timestamps = [
            (window * scenario.samples_per_window + i) * scenario.sample_interval
            for i in range(scenario.samples_per_window)
        ]

        def feed(asset_id: str, port: str, outputs: dict, t: float) -> float:
            bound = routes.get((asset_id, port))
            if bound:
                return sum(outputs[(a, p)] * f for a, p, f in bound)
            name = f"{asset_id}.{port}"
            signal = scenario.exogenous.get(name)
            if signal is None:
                raise MissingInputError(f"port {name} is neither bound nor exogenous")
            return signal.value_at(t)

        for t in timestamps:
            sim_out: dict[tuple[str, str], float] = {}
            meas_out: dict[tuple[str, str], float] = {}
            for asset_id in sequence:
                model_id = config.selection[asset_id]
                surrogate = live[model_id]
                entry = truth[asset_id]

                x_true = [feed(asset_id, port, meas_out, t) for port in entry.inputs]
                a_true, b_true = true_params[asset_id]
                y_true = a_true @ np.asarray(x_true) + b_true if entry.inputs else b_true.copy()
                for port, value in zip(entry.outputs, y_true):
                    meas_out[(asset_id, port)] = float(value)

                x_sim = [feed(asset_id, port, sim_out, t) for port in surrogate["inputs"]]
                y_sim = (
                    surrogate["a"] @ np.asarray(x_sim) + surrogate["b"]
                    if surrogate["inputs"]
                    else surrogate["b"].copy()
                )
                for port, value in zip(surrogate["outputs"], y_sim):
                    sim_out[(asset_id, port)] = float(value)
                    signal = f"{asset_id}.{port}"
                    sim_series.setdefault(signal, []).append(float(value))
                    meas_series.setdefault(signal, []).append(meas_out[(asset_id, port)])

                window_in = sample_inputs[model_id]
                for port in surrogate["inputs"]:
                    window_in[port].append(feed(asset_id, port, meas_out, t))
                window_out = sample_outputs[model_id]
                for port in surrogate["outputs"]:
                    window_out[port].append(meas_out[(asset_id, port)])

        simulated = [
            TelemetrySeries(name, tuple(timestamps), tuple(values))
            for name, values in sorted(sim_series.items())
        ]
        measured = [
            TelemetrySeries(name, tuple(timestamps), tuple(values))
            for name, values in sorted(meas_series.items())
        ]
        deviation = compute_deviation(simulated, measured, scenario.window_seconds)
        windows_data = {
            mid: WindowSamples(
                inputs={name: tuple(v) for name, v in sample_inputs[mid].items()},
                outputs={name: tuple(v) for name, v in sample_outputs[mid].items()},
            )
            for mid in config.selection.values()
        }
        decision = adapt(
            graph,
            config,
            deviation,
            scenario.thresholds,
            windows_data,
            level=level,
            budget=budget,
        )

        if decision.verdict is AdaptionVerdict.REPARAMETERIZE:
            spec = decision.new_parameters
            live[decision.offender] = {
                "inputs": spec.inputs,
                "outputs": spec.outputs,
                "a": np.asarray(spec.matrix, dtype=float).reshape(len(spec.outputs), len(spec.inputs)),
                "b": np.asarray(spec.offset, dtype=float),
            }
        elif decision.verdict is AdaptionVerdict.RESELECT:
            config = decision.new_configuration
            for model_id in config.selection.values():
                if model_id not in live:
                    live[model_id] = _live_surrogate(graph, model_id)

        record = {"window": window, "selection": dict(config.selection)}
        record.update(decision.to_dict())
        record.update(deviation.to_dict())
        records.append(record)
    return records


def decisions_to_ndjson(records: list[dict]) -> str:
    """One JSON object per line, key-sorted; the adaption decision log format."""
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records)
