"""Closed-loop scenarios: file parsing, signals, drift and the decision log."""

import json

import pytest

from twingraph import (
    ConstantSignal,
    DecisionLevel,
    DocumentSyntaxError,
    DriftStep,
    MissingInputError,
    RampSignal,
    SampledSignal,
    TrueProcessEntry,
    ValidationError,
    decisions_to_ndjson,
    load_scenario,
    model_node_id,
    run_closed_loop,
    select_configuration,
)


@pytest.fixture(scope="module")
def drift_text(fixtures_dir):
    return (fixtures_dir / "scenario_drift.json").read_text(encoding="utf-8")


@pytest.fixture(scope="module")
def keep_text(fixtures_dir):
    return (fixtures_dir / "scenario_keep.json").read_text(encoding="utf-8")


@pytest.fixture(scope="module")
def reselect_text(fixtures_dir):
    return (fixtures_dir / "scenario_reselect.json").read_text(encoding="utf-8")


# ---------------------------------------------------------------------------
# Parsing


def test_parse_drift_scenario(drift_text):
    scenario = load_scenario(drift_text)
    assert scenario.sample_interval == 1.0
    assert scenario.samples_per_window == 10
    assert scenario.windows == 3
    assert scenario.window_seconds == 9.0
    assert scenario.thresholds.epsilon == 0.05
    assert scenario.thresholds.escalation == 8.0
    assert scenario.exogenous["Electrolysis.power"] == RampSignal(10.0, 1.0)
    assert scenario.exogenous["Methanation.power"] == ConstantSignal(5.0)
    entry = scenario.true_process["Electrolysis"]
    assert entry.inputs == ("power",)
    assert entry.outputs == ("H2",)
    assert entry.matrix == ((2.0,),)
    assert entry.drift == (DriftStep(1, ((2.5,),), None),)


def test_thresholds_default_when_absent():
    scenario = load_scenario(
        '{"sampleInterval": 1.0, "samplesPerWindow": 2, "windows": 1}'
    )
    assert scenario.thresholds.epsilon == 0.05
    assert scenario.thresholds.escalation == 4.0
    assert scenario.exogenous == {}
    assert scenario.true_process == {}


def _scenario_obj(**overrides):
    obj = {"sampleInterval": 1.0, "samplesPerWindow": 10, "windows": 3}
    obj.update(overrides)
    return obj


@pytest.mark.parametrize(
    "mutate, match",
    [
        (lambda o: o.pop("sampleInterval"), "missing 'sampleInterval'"),
        (lambda o: o.update(sampleInterval=0.0), "sampleInterval must be positive"),
        (lambda o: o.update(samplesPerWindow=1), "integer >= 2"),
        (lambda o: o.update(samplesPerWindow=2.5), "integer >= 2"),
        (lambda o: o.update(windows=0), "positive integer"),
        (lambda o: o.update(thresholds=[1]), "thresholds must be an object"),
        (lambda o: o.update(thresholds={"epsilon": 0.0}), "epsilon must be positive"),
        (lambda o: o.update(exogenous={"A.x": 3}), "signal must be an object"),
        (lambda o: o.update(exogenous={"A.x": {"kind": "noise"}}), "unknown signal kind 'noise'"),
        (lambda o: o.update(exogenous={"A.x": {"kind": "constant"}}), "missing 'value'"),
        (lambda o: o.update(exogenous={"A.x": {"kind": "ramp", "start": 1.0}}), "missing 'slope'"),
        (
            lambda o: o.update(exogenous={"A.x": {"kind": "samples", "timestamps": [], "values": []}}),
            "equal-length non-empty",
        ),
        (
            lambda o: o.update(
                exogenous={"A.x": {"kind": "samples", "timestamps": [0, 1], "values": [1.0]}}
            ),
            "equal-length non-empty",
        ),
        (
            lambda o: o.update(
                exogenous={"A.x": {"kind": "samples", "timestamps": [0, 0], "values": [1.0, 2.0]}}
            ),
            "strictly increasing",
        ),
        (lambda o: o.update(trueProcess={"A": []}), "must be an object"),
        (lambda o: o.update(trueProcess={"A": {"outputs": ["y"], "A": [[1]], "b": [0]}}), "missing 'inputs'"),
        (
            lambda o: o.update(trueProcess={"A": {"inputs": [], "outputs": [], "A": [], "b": []}}),
            "non-empty list of port names",
        ),
        (
            lambda o: o.update(
                trueProcess={"A": {"inputs": ["x", "z"], "outputs": ["y"], "A": [[1.0]], "b": [0.0]}}
            ),
            "A must be a 1x2 matrix",
        ),
        (
            lambda o: o.update(
                trueProcess={"A": {"inputs": ["x"], "outputs": ["y"], "A": [["ten"]], "b": [0.0]}}
            ),
            "non-numeric matrix entry",
        ),
        (
            lambda o: o.update(
                trueProcess={"A": {"inputs": ["x"], "outputs": ["y"], "A": [[1.0]], "b": [0.0, 1.0]}}
            ),
            "b must be a vector of length 1",
        ),
        (
            lambda o: o.update(
                trueProcess={
                    "A": {"inputs": ["x"], "outputs": ["y"], "A": [[1.0]], "b": [0.0], "drift": [3]}
                }
            ),
            r"drift\[0\]: must be an object",
        ),
        (
            lambda o: o.update(
                trueProcess={
                    "A": {
                        "inputs": ["x"],
                        "outputs": ["y"],
                        "A": [[1.0]],
                        "b": [0.0],
                        "drift": [{"fromWindow": -1, "A": [[2.0]]}],
                    }
                }
            ),
            "non-negative integer",
        ),
        (
            lambda o: o.update(
                trueProcess={
                    "A": {
                        "inputs": ["x"],
                        "outputs": ["y"],
                        "A": [[1.0]],
                        "b": [0.0],
                        "drift": [{"fromWindow": 1}],
                    }
                }
            ),
            "needs A or b",
        ),
    ],
)
def test_load_scenario_rejects(mutate, match):
    obj = _scenario_obj()
    mutate(obj)
    with pytest.raises(ValidationError, match=match):
        load_scenario(json.dumps(obj))


def test_load_scenario_syntax_errors():
    with pytest.raises(DocumentSyntaxError, match="malformed scenario file"):
        load_scenario("{nope")
    with pytest.raises(ValidationError, match="scenario must be a JSON object"):
        load_scenario("[]")


# ---------------------------------------------------------------------------
# Signals and drift schedules


def test_signal_values():
    assert ConstantSignal(5.0).value_at(123.0) == 5.0
    assert RampSignal(10.0, 1.5).value_at(4.0) == 16.0
    sampled = SampledSignal((0.0, 10.0), (0.0, 100.0))
    assert sampled.value_at(5.0) == 50.0
    assert sampled.value_at(-1.0) == 0.0  # clamps before the first sample
    assert sampled.value_at(99.0) == 100.0


def test_drift_schedule_applies_latest_step():
    entry = TrueProcessEntry(
        inputs=("x",),
        outputs=("y",),
        matrix=((1.0,),),
        offset=(0.0,),
        drift=(DriftStep(1, None, (5.0,)), DriftStep(2, ((3.0,),), None)),
    )
    a0, b0 = entry.params_at(0)
    assert (a0[0][0], b0[0]) == (1.0, 0.0)
    a1, b1 = entry.params_at(1)
    assert (a1[0][0], b1[0]) == (1.0, 5.0)
    a2, b2 = entry.params_at(2)
    assert (a2[0][0], b2[0]) == (3.0, 5.0)
    a9, b9 = entry.params_at(9)
    assert (a9[0][0], b9[0]) == (3.0, 5.0)


# ---------------------------------------------------------------------------
# Closed loop


def _run(matched_graph, text, **kwargs):
    config = select_configuration(matched_graph, DecisionLevel.CONTROL)
    return run_closed_loop(matched_graph, config, load_scenario(text), **kwargs)


def test_drift_recovery_loop(matched, drift_text):
    graph, _ = matched
    records = _run(graph, drift_text)
    assert [r["verdict"] for r in records] == ["keep", "reparameterize", "keep"]

    drifted = records[1]
    assert drifted["offender"] == "Electrolysis_PEM"
    assert drifted["aggregate"] == pytest.approx(0.2, abs=1e-12)
    assert drifted["perSignal"]["Electrolysis.H2"] == pytest.approx(0.2, abs=1e-12)
    gain = drifted["newParameters"]["A"][0][0]
    assert gain == pytest.approx(2.5, abs=1e-9)
    assert drifted["newParameters"]["b"][0] == pytest.approx(0.0, abs=1e-9)
    # After the refit the loop tracks the drifted process again.
    assert records[2]["aggregate"] < 1e-6


def test_stable_process_keeps_configuration(matched, keep_text):
    graph, _ = matched
    records = _run(graph, keep_text)
    assert [r["verdict"] for r in records] == ["keep"] * 3
    for record in records:
        assert record["aggregate"] < 0.05
        assert record["selection"] == {
            "DAC": "DAC_Surrogate",
            "Electrolysis": "Electrolysis_PEM",
            "Methanation": "Methanation_Detailed",
        }


def test_jump_triggers_reselect(reselect_matched, reselect_text):
    graph, _ = reselect_matched
    records = _run(graph, reselect_text)
    assert [r["verdict"] for r in records] == ["keep", "reselect", "keep"]

    jump = records[1]
    assert jump["offender"] == "Methanation_Detailed"
    assert jump["selection"]["Methanation"] == "Methanation_Fast"
    assert jump["newConfiguration"]["selection"]["Methanation"] == "Methanation_Fast"
    # The replacement matches the drifted truth, so the last window is quiet.
    assert records[2]["selection"]["Methanation"] == "Methanation_Fast"
    assert records[2]["aggregate"] < 1e-9


def test_record_layout(matched, drift_text):
    graph, _ = matched
    records = _run(graph, drift_text)
    base_keys = {"window", "selection", "verdict", "rationale", "perSignal", "aggregate", "windowSeconds"}
    assert set(records[0]) == base_keys
    assert set(records[1]) == base_keys | {"offender", "newParameters"}
    assert [r["window"] for r in records] == [0, 1, 2]
    assert records[0]["windowSeconds"] == 9.0
    assert set(records[0]["perSignal"]) == {
        "DAC.CO2",
        "Electrolysis.H2",
        "Methanation.CH4",
    }


def test_caller_graph_is_untouched(matched, drift_text):
    graph, _ = matched
    version = graph.version
    _run(graph, drift_text)
    assert graph.version == version
    for model in ("DAC_Surrogate", "Electrolysis_PEM", "Methanation_Detailed"):
        props = graph.node(model_node_id(model)).properties
        assert props["evaluationCount"] == 0
        assert "lastDeviation" not in props


def test_log_is_deterministic(matched, drift_text):
    graph, _ = matched
    first = decisions_to_ndjson(_run(graph, drift_text))
    second = decisions_to_ndjson(_run(graph, drift_text))
    assert first == second
    lines = first.splitlines()
    assert len(lines) == 3
    for line in lines:
        record = json.loads(line)
        assert json.dumps(record, sort_keys=True, ensure_ascii=False) == line


def test_unbound_port_without_signal(matched, drift_text):
    graph, _ = matched
    obj = json.loads(drift_text)
    del obj["exogenous"]["Electrolysis.power"]
    with pytest.raises(MissingInputError, match="Electrolysis.power is neither bound nor exogenous"):
        _run(graph, json.dumps(obj))


def test_truth_must_cover_surrogate_outputs(matched, drift_text):
    graph, _ = matched
    obj = json.loads(drift_text)
    obj["trueProcess"]["Electrolysis"]["outputs"] = ["O2"]
    with pytest.raises(ValidationError, match=r"surrogate outputs \['H2'\] have no ground truth"):
        _run(graph, json.dumps(obj))
