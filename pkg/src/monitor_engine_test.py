"""Test of the decision-mining engine."""

from collections import deque

import numpy as np
import pytest

from config import RunConfig
from control_flow import DecisionPoint
from monitor_engine import (
    ACCURACY,
    DATA,
    FREQUENCY,
    NEW_ATTRIBUTE,
    STRUCTURAL_ADDED,
    STRUCTURAL_CLASS_CHANGE,
    STRUCTURAL_REMOVED,
    CaseState,
    DecisionMiningEngine,
    MonitorState,
    attribute_scale,
    collect_features,
    monitor_decision_point,
    remine,
)
from rule_miner import TrainingInstance
from stream_ingest import Event
from test_helpers import events_for_traces

CHECK = DecisionPoint("Check", frozenset({"Normal", "Extensive"}))


def _loan_traces(amounts, threshold=80_000):
    traces = [
        ["Apply", "Check",
         "Normal" if a <= threshold else "Extensive",
         "Assess", "Inform"]
        for a in amounts
    ]
    return traces, [{"amount_loan": float(a)} for a in amounts]


def _amounts(seed, n):
    rng = np.random.default_rng(seed)
    return [int(a) for a in rng.integers(10_000, 120_001, size=n)]


def _instances(amounts, threshold=80_000, start=0, extra=None):
    return [
        TrainingInstance(
            {"amount_loan": float(a), **(extra or {})},
            "Normal" if a <= threshold else "Extensive", start + i)
        for i, a in enumerate(amounts)
    ]


def _mined_state(config, amounts):
    state = MonitorState(CHECK, ws=config.grace, quota=config.min_mine)
    state.reset_statistics(config)
    window = deque(_instances(amounts))
    assert remine(CHECK, state, window, config, seq=len(window)) is None
    return state, window


def test_collect_features() -> None:
    """Features are those logged up to the last event of the point."""
    case = CaseState(events=[
        Event("c", "Apply", 0, {"amount_loan": 5.0, "age": 30.0}),
        Event("c", "Check", 1, {"age": 31.0}),
        Event("c", "Normal", 2, {"score": 1.0}),
    ])
    assert collect_features(case, "Check") == {"amount_loan": 5.0,
                                               "age": 31.0}
    assert collect_features(case, "Check", end=1) == {}
    assert collect_features(case, "Nope") == {}
    assert collect_features(None, "Check") == {}


def test_remine_initial_is_silent() -> None:
    """The first model is not a drift."""
    config = RunConfig(grace=50, min_mine=10)
    state, _ = _mined_state(config, _amounts(0, 50))
    assert state.model is not None
    assert state.model.trained_on == 50
    assert state.remine_log == [(50, "initial")]
    assert not state.drift_flag


def test_new_attribute_remines_at_once() -> None:
    """An unseen attribute forces a remine at the decision that shows it."""
    config = RunConfig(grace=50, min_mine=10)
    state, window = _mined_state(config, _amounts(1, 50))
    instance = _instances([30_000], start=100, extra={"income": 4000.0})[0]
    window.append(instance)
    state, note = monitor_decision_point(CHECK, instance, state, window,
                                         config)
    assert note is not None
    assert (note.trigger, note.detail, note.seq) == \
        (NEW_ATTRIBUTE, "income", 100)
    assert note.label == "new-attribute(income)"
    assert note.old_rules
    assert "income" in state.known_attributes
    assert not state.drift_flag


def test_rule_drift_detected() -> None:
    """A moved threshold shows up in accuracy or branching frequency."""
    config = RunConfig(grace=100, min_mine=30, adwin_input="raw")
    state, window = _mined_state(config, _amounts(2, 100))
    stream = (_instances(_amounts(3, 300), start=1000)
              + _instances(_amounts(13, 600), threshold=50_000, start=1300))
    notes = []
    for instance in stream:
        window.append(instance)
        while len(window) > state.ws:
            window.popleft()
        state, note = monitor_decision_point(CHECK, instance, state,
                                             window, config)
        if note is not None:
            notes.append(note)
    drifts = [n for n in notes
              if n.trigger in (ACCURACY, FREQUENCY) and n.seq >= 1300]
    assert drifts
    assert drifts[0].old_rules != drifts[0].new_rules
    # the reported window is the window the point continues with
    assert all(n.adwin_window >= config.min_mine for n in notes)
    assert state.ws >= config.min_mine


def test_pending_remine_waits() -> None:
    """A flagged point remines once its window meets the quota."""
    config = RunConfig(grace=50, min_mine=10, adwin_input="raw")
    state, window = _mined_state(config, _amounts(4, 50))
    window.clear()
    state.flag(STRUCTURAL_CLASS_CHANGE, None, 0)
    state.quota = 20
    instances = _instances(_amounts(5, 20), start=200)
    for instance in instances[:-1]:
        window.append(instance)
        state, note = monitor_decision_point(CHECK, instance, state,
                                             window, config)
        assert note is None
    # detectors are not fed while the remine is pending
    assert state.adwin_acc.window_size() == 0
    assert state.drift_flag

    window.append(instances[-1])
    state, note = monitor_decision_point(CHECK, instances[-1], state,
                                         window, config)
    assert note is not None
    assert note.trigger == STRUCTURAL_CLASS_CHANGE
    assert note.new_rules


def test_engine_mines_after_grace() -> None:
    """The point is found and mined once enough cases completed."""
    traces, attributes = _loan_traces(_amounts(6, 300))
    engine = DecisionMiningEngine(RunConfig(grace=50, min_mine=20,
                                            net_stride=10))
    report = engine.process_all(events_for_traces(traces, attributes))

    assert [p.point for p in report.points] == [CHECK]
    point = report.points[0]
    assert point.model is not None
    assert point.model.tree.root.attribute == "amount_loan"
    assert point.model.tree.root.threshold == pytest.approx(80_000,
                                                            abs=10_000)
    assert point.accuracy is not None and point.accuracy >= 0.9
    assert report.completed_cases == 300
    assert report.open_cases == 0
    assert report.events_seen == 1500
    assert report.accuracy_series
    assert all(0.0 <= s.running_accuracy <= 1.0
               for s in report.accuracy_series)


def test_engine_before_grace() -> None:
    """No rules before the grace period is over."""
    traces, attributes = _loan_traces(_amounts(7, 40))
    engine = DecisionMiningEngine(RunConfig(grace=200, net_stride=10))
    report = engine.process_all(events_for_traces(traces, attributes))
    assert all(p.model is None for p in report.points)
    assert report.notifications == []


def test_engine_new_decision_point() -> None:
    """A branch appearing after initial mining is a structural drift."""
    rng = np.random.default_rng(8)
    traces, attributes = _loan_traces(_amounts(9, 150))
    for a in _amounts(10, 150):
        risk = int(rng.integers(0, 7))
        traces.append(["Apply", "Check",
                       "Normal" if a <= 80_000 else "Extensive", "Assess",
                       "Accept" if risk < 4 else "Reject", "Inform"])
        attributes.append({"amount_loan": float(a), "risk": float(risk)})
    engine = DecisionMiningEngine(RunConfig(grace=50, min_mine=20,
                                            net_stride=10))
    report = engine.process_all(events_for_traces(traces, attributes))

    assert {p.point.id for p in report.points} == {"Check", "Assess"}
    added = [n for n in report.notifications
             if n.trigger == STRUCTURAL_ADDED]
    assert [n.dp_id for n in added] == ["Assess"]
    assess = next(p for p in report.points if p.point.id == "Assess")
    assert assess.model is not None
    assert "risk" in assess.model.rules.attributes()


def test_engine_removed_point() -> None:
    """A point whose branch vanishes from the graph is reported."""
    traces, attributes = _loan_traces(_amounts(11, 120))
    engine = DecisionMiningEngine(RunConfig(grace=50, min_mine=20,
                                            net_stride=10))
    engine.process_all(events_for_traces(traces, attributes))
    del engine.dfg.entries[("Check", "Extensive")]
    notes = engine._refresh_net()
    assert [(n.dp_id, n.trigger) for n in notes] == \
        [("Check", STRUCTURAL_REMOVED)]
    assert notes[0].new_rules == ""
    assert engine.report().points == []


def test_open_cases_bounded() -> None:
    """The least recently active case is evicted at the limit."""
    engine = DecisionMiningEngine(RunConfig(max_open_cases=3))
    for i in range(5):
        engine.process_event(Event(f"c{i}", "Apply", i, {}))
    assert list(engine.trace_dict) == ["c2", "c3", "c4"]
    assert engine.lru_evictions == 2
    footprint = engine.memory_footprint()
    assert footprint.open_cases == 3
    assert footprint.dfg_case_states == 3


def test_no_series() -> None:
    """The accuracy series can be switched off."""
    traces, attributes = _loan_traces(_amounts(12, 200))
    engine = DecisionMiningEngine(RunConfig(grace=50, min_mine=20,
                                            net_stride=10),
                                  keep_series=False)
    report = engine.process_all(events_for_traces(traces, attributes))
    assert report.accuracy_series == []
    assert report.points[0].decisions > 0


def test_new_attribute_refits_once_window_refilled() -> None:
    """After a new attribute the rules are mined again on data carrying it."""
    config = RunConfig(grace=50, min_mine=10, adwin_input="raw")
    state, window = _mined_state(config, _amounts(1, 50))
    rng = np.random.default_rng(21)
    stream = []
    for i, a in enumerate(_amounts(22, 60)):
        income = float(rng.integers(1_000, 6_001))
        label = "Normal" if a <= 80_000 and income > 3_000 else "Extensive"
        stream.append(TrainingInstance(
            {"amount_loan": float(a), "income": income}, label, 100 + i))
    notes = []
    for instance in stream:
        window.append(instance)
        while len(window) > state.ws:
            window.popleft()
        state, note = monitor_decision_point(CHECK, instance, state,
                                             window, config)
        if note is not None:
            notes.append(note)

    refits = [n for n in notes if n.trigger == NEW_ATTRIBUTE]
    assert refits[0].seq == 100
    assert len(refits) == 2
    assert refits[1].detail == "income"
    assert state.refill == 0
    assert state.model is not None
    assert all("income" in inst.features for inst in window)


def test_data_signals_are_scaled() -> None:
    """Large attribute values on a stable stream raise no data drift."""
    config = RunConfig(grace=100, min_mine=30)
    state, window = _mined_state(config, _amounts(14, 100))
    assert set(state.scales) == {"amount_loan"}
    low, high = state.scales["amount_loan"]
    assert 10_000 <= low < high <= 120_000

    notes = []
    for instance in _instances(_amounts(15, 3000), start=1000):
        window.append(instance)
        while len(window) > state.ws:
            window.popleft()
        state, note = monitor_decision_point(CHECK, instance, state,
                                             window, config)
        if note is not None:
            notes.append(note)
    assert [n for n in notes if n.trigger == DATA] == []


def test_attribute_scale() -> None:
    """Scales need two distinct values of the attribute."""
    instances = _instances([20_000, 90_000, 50_000])
    assert attribute_scale(instances, "amount_loan") == (20_000, 90_000)
    assert attribute_scale(instances[:1], "amount_loan") is None
    assert attribute_scale(instances, "income") is None


@pytest.mark.parametrize("net_stride", [1, 10])
def test_engine_frequent_refresh(net_stride: int) -> None:
    """Early, incomplete nets do not cut cases short."""
    traces, attributes = _loan_traces(_amounts(16, 300))
    engine = DecisionMiningEngine(RunConfig(grace=50, min_mine=20,
                                            net_stride=net_stride))
    report = engine.process_all(events_for_traces(traces, attributes))

    assert [p.point for p in report.points] == [CHECK]
    assert report.completed_cases == 300
    assert report.open_cases == 0
    assert engine.dfg.count(("Check", "Normal")) \
        + engine.dfg.count(("Check", "Extensive")) == 300
    model = report.points[0].model
    assert model is not None
    assert model.tree.root.attribute == "amount_loan"


def test_decisions_before_registration_are_kept() -> None:
    """Decisions taken before the first net are used for the first model."""
    traces, attributes = _loan_traces(_amounts(17, 100))
    engine = DecisionMiningEngine(RunConfig(grace=50, min_mine=20,
                                            net_stride=500))
    engine.process_all(events_for_traces(traces, attributes))
    assert engine.completed_cases == 100
    model = engine.dms["Check"].model
    assert model is not None
    assert model.trained_on == 50
    assert engine.memory_footprint().buffered_instances <= 50 * 5


def test_new_class_starts_from_its_first_decision() -> None:
    """A point that gains a class keeps the decisions since it appeared."""
    amounts = _amounts(18, 300)
    traces, attributes = _loan_traces(amounts[:150])
    for a in amounts[150:]:
        check = ("Simple" if a <= 30_000 else
                 "Normal" if a <= 80_000 else "Extensive")
        traces.append(["Apply", "Check", check, "Assess", "Inform"])
        attributes.append({"amount_loan": float(a)})
    events = list(events_for_traces(traces, attributes))
    first_simple = next(e.seq for e in events if e.activity == "Simple")

    engine = DecisionMiningEngine(RunConfig(grace=50, min_mine=20,
                                            net_stride=10, dep_threshold=0.5))
    seeded = None
    for event in events:
        engine.process_event(event)
        point = engine.points.get("Check")
        if seeded is None and point is not None \
                and "Simple" in point.classes:
            seeded = list(engine.dps_data["Check"])
    assert seeded
    assert seeded[0].label == "Simple"
    assert seeded[0].seq == first_simple
    assert all(inst.seq >= first_simple for inst in seeded)

    changes = [n for n in engine.notifications
               if n.trigger == STRUCTURAL_CLASS_CHANGE]
    assert [n.dp_id for n in changes] == ["Check"]
    model = engine.dms["Check"].model
    assert model is not None
    assert "Simple" in model.tree.classes
