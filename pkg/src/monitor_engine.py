"""
Runtime decision mining over an event stream.

The engine keeps a lossy-counted directly-follows graph, periodically
mines a heuristics net from it and registers the decision points it
finds. Every decision a case takes at a known point becomes a training
instance in that point's window. After the grace period a decision tree
is fitted per point; from then on each decision is first predicted
(prequential scoring) and then fed to the point's drift detectors. Any
drift, a new attribute or a structural change leads to remining the
point's rules from its current window.
"""

from __future__ import annotations

import logging
from collections import Counter, OrderedDict, deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

from config import RunConfig
from control_flow import (
    DecisionPoint,
    HeuristicsNet,
    diff,
    discover_decision_points,
    mine_heuristics_net,
)
from drift_adwin import AdwinDetector
from rule_miner import (
    DecisionTree,
    RuleSet,
    TrainingInstance,
    extract_rules,
    fit_tree,
    predict,
)
from stream_dfg import DfgCounter, observe, snapshot, terminal_activities
from stream_ingest import Event

LOGGER = logging.getLogger(__name__)

INITIAL = "initial"
NEW_ATTRIBUTE = "new-attribute"
ACCURACY = "accuracy"
FREQUENCY = "frequency"
DATA = "data"
STRUCTURAL_ADDED = "structural-added"
STRUCTURAL_CLASS_CHANGE = "structural-class-change"
STRUCTURAL_REMOVED = "structural-removed"

TRIGGERS = (NEW_ATTRIBUTE, ACCURACY, FREQUENCY, DATA, STRUCTURAL_ADDED,
            STRUCTURAL_CLASS_CHANGE, STRUCTURAL_REMOVED)

Window = deque[TrainingInstance]
Scale = tuple[float, float]


@dataclass
class CaseState:
    """What is known about one open case."""

    events: list[Event] = field(default_factory=list)
    attributes: dict[str, float] = field(default_factory=dict)
    observed_points: set[str] = field(default_factory=set)


class DecisionModel(NamedTuple):
    """A fitted tree with its rules, training size and the seq it was fitted at."""

    tree: DecisionTree
    rules: RuleSet
    trained_on: int
    seq: int


class DriftNotification(NamedTuple):
    """
    A remine (or removal) of a decision point's rules and what caused it.

    `adwin_window` is the point's window size when the drift was flagged:
    the detector's window, raised to the remine minimum if it was smaller.
    """

    seq: int
    dp_id: str
    trigger: str
    detail: Optional[str]
    old_rules: str
    new_rules: str
    adwin_window: int
    case_id: str = ""

    @property
    def label(self) -> str:
        """Trigger with its class or attribute, e.g. `data(income)`."""
        return f"{self.trigger}({self.detail})" if self.detail else self.trigger


class AccuracySample(NamedTuple):
    """Running prequential accuracy of a point after one decision."""

    seq: int
    dp_id: str
    running_accuracy: float


def _detector(config: RunConfig, delta: Optional[float]) -> AdwinDetector:
    assert delta is not None
    return AdwinDetector(delta=delta, stride=config.adwin_stride)


def attribute_scale(instances: Iterable[TrainingInstance],
                    attribute: str) -> Optional[Scale]:
    """Smallest and largest value of an attribute, None if they coincide."""
    values = [inst.features[attribute] for inst in instances
              if attribute in inst.features]
    if not values or min(values) == max(values):
        return None
    return min(values), max(values)


@dataclass
class MonitorState:
    """
    Monitoring state of one decision point.

    Accumulators and detectors cover the decisions since the last
    (re)mine. `pending` is the trigger of a remine waiting for enough
    instances, `quota` the window size that remine needs. `scales` map
    attribute values onto [0, 1] for the data detectors, using the range
    seen in the training window. `refill` counts the decisions left until
    the window no longer holds instances from before the attribute
    `refill_attribute` appeared.
    """

    point: DecisionPoint
    ws: int
    quota: int
    model: Optional[DecisionModel] = None
    drift_flag: bool = False
    pending: tuple[str, Optional[str]] = (INITIAL, None)
    pending_window: int = 0
    acc_sum: float = 0.0
    acc_n: int = 0
    class_counts: Counter[str] = field(default_factory=Counter)
    attr_sums: dict[str, float] = field(default_factory=dict)
    attr_ns: dict[str, int] = field(default_factory=dict)
    adwin_acc: AdwinDetector = field(default_factory=AdwinDetector)
    adwin_class: dict[str, AdwinDetector] = field(default_factory=dict)
    adwin_attr: dict[str, AdwinDetector] = field(default_factory=dict)
    scales: dict[str, Scale] = field(default_factory=dict)
    known_attributes: set[str] = field(default_factory=set)
    refill: int = 0
    refill_attribute: Optional[str] = None
    remine_log: list[tuple[int, str]] = field(default_factory=list)
    history: list[DecisionModel] = field(default_factory=list)
    decisions: int = 0
    correct: int = 0
    last_accuracy: float = 0.0

    def reset_statistics(self, config: RunConfig) -> None:
        """Fresh accumulators and detectors."""
        self.acc_sum = 0.0
        self.acc_n = 0
        self.class_counts = Counter()
        self.attr_sums = {}
        self.attr_ns = {}
        self.adwin_acc = _detector(config, config.delta_accuracy)
        self.adwin_class = {
            c: _detector(config, config.delta_frequency)
            for c in sorted(self.point.classes)
        }
        self.adwin_attr = {}

    def flag(self, trigger: str, detail: Optional[str],
             adwin_window: int) -> None:
        """Ask for a remine, remembering why and the window at that time."""
        self.drift_flag = True
        self.pending = (trigger, detail)
        self.pending_window = adwin_window

    def running_accuracy(self) -> float:
        """Prequential accuracy since the last (re)mine."""
        return self.acc_sum / self.acc_n if self.acc_n else 0.0

    def bucket_count(self) -> int:
        """Histogram buckets held by all of the point's detectors."""
        return (self.adwin_acc.bucket_count()
                + sum(d.bucket_count() for d in self.adwin_class.values())
                + sum(d.bucket_count() for d in self.adwin_attr.values()))


def collect_features(case: Optional[CaseState], point_id: str,
                     end: Optional[int] = None) -> dict[str, float]:
    """
    Attributes of a case up to and including its last `point_id` event.

    Only events before index `end` are considered. Later writes of an
    attribute win.
    """
    if case is None:
        LOGGER.warning("no open case to collect features for %r", point_id)
        return {}
    events = case.events[:end]
    last = next((i for i in range(len(events) - 1, -1, -1)
                 if events[i].activity == point_id), None)
    features: dict[str, float] = {}
    if last is None:
        return features
    for event in events[:last + 1]:
        features.update(event.attributes)
    return features


def _trim(window: Window, ws: int) -> None:
    while len(window) > ws:
        window.popleft()


def remine(point: DecisionPoint, state: MonitorState, window: Window,
           config: RunConfig, seq: int,
           case_id: str = "") -> Optional[DriftNotification]:
    """
    Fit a new model on the point's current window and reset monitoring.

    Returns the notification for the remine; the first model of a point
    registered before initial mining is not a drift and yields None.

    A remine caused by a new attribute is followed by another one once
    the window has been refilled with decisions made after it appeared.
    """
    instances = list(window)
    tree = fit_tree(instances, config.tree)
    rules = extract_rules(tree)
    old = state.model
    model = DecisionModel(tree, rules, len(instances), seq)
    trigger, detail = state.pending

    state.model = model
    state.history.append(model)
    state.remine_log.append(
        (seq, f"{trigger}({detail})" if detail else trigger))
    state.known_attributes = {a for inst in instances for a in inst.features}
    state.scales = {
        a: scale for a in sorted(state.known_attributes)
        if (scale := attribute_scale(instances, a)) is not None
    }
    state.reset_statistics(config)
    state.drift_flag = False
    state.pending = (INITIAL, None)
    state.quota = config.min_mine
    if trigger == NEW_ATTRIBUTE and detail != state.refill_attribute:
        state.refill = state.ws
        state.refill_attribute = detail
    LOGGER.info("mined %s on %d instances (%s):\n%s",
                point, len(instances), trigger, rules.text())

    if trigger == INITIAL:
        return None
    return DriftNotification(
        seq, point.id, trigger, detail,
        old.rules.text() if old is not None else "", rules.text(),
        state.pending_window, case_id
    )


def _scaled(state: MonitorState, attribute: str, value: float,
            window: Window, config: RunConfig) -> Optional[float]:
    """
    Attribute value mapped through the point's scale for it.

    An attribute without a scale gets one from the window once at least
    `min_mine` instances there carry it; until then it is not monitored.
    """
    scale = state.scales.get(attribute)
    if scale is None:
        carrying = [inst for inst in window if attribute in inst.features]
        if len(carrying) < config.min_mine:
            return None
        scale = attribute_scale(carrying, attribute)
        if scale is None:
            return None
        state.scales[attribute] = scale
    low, high = scale
    return (value - low) / (high - low)


def _feed_detectors(state: MonitorState, instance: TrainingInstance,
                    correct: bool, window: Window, config: RunConfig
                    ) -> Optional[tuple[str, Optional[str], int]]:
    """Add this decision's signals; the first detector that fires wins."""
    signals: list[tuple[str, Optional[str], AdwinDetector, float]] = []
    if config.adwin_input == "average":
        if state.acc_n < (config.monitor_warmup or 0):
            return None
        total = sum(state.class_counts.values())
        signals.append((ACCURACY, None, state.adwin_acc,
                        state.acc_sum / state.acc_n))
        for c, det in state.adwin_class.items():
            signals.append((FREQUENCY, c, det, state.class_counts[c] / total))
        values = {a: state.attr_sums[a] / state.attr_ns[a]
                  for a in instance.features}
    else:
        signals.append((ACCURACY, None, state.adwin_acc, float(correct)))
        for c, det in state.adwin_class.items():
            signals.append((FREQUENCY, c, det, float(instance.label == c)))
        values = dict(instance.features)

    for a, value in sorted(values.items()):
        scaled = _scaled(state, a, value, window, config)
        if scaled is not None:
            signals.append((DATA, a, _attr_detector(state, a, config),
                            scaled))

    fired: Optional[tuple[str, Optional[str], int]] = None
    for trigger, detail, detector, value in signals:
        if detector.add(value) and fired is None:
            fired = (trigger, detail, detector.window_size())
    return fired


def _attr_detector(state: MonitorState, attribute: str,
                   config: RunConfig) -> AdwinDetector:
    detector = state.adwin_attr.get(attribute)
    if detector is None:
        detector = _detector(config, config.delta_data)
        state.adwin_attr[attribute] = detector
    return detector


def monitor_decision_point(point: DecisionPoint, instance: TrainingInstance,
                           state: MonitorState, window: Window,
                           config: RunConfig, case_id: str = ""
                           ) -> tuple[MonitorState, Optional[DriftNotification]]:
    """
    Score one decision against the point's model and watch for drift.

    The instance is expected to be in `window` already. Detectors are not
    fed while a remine is pending from an earlier call.
    """
    assert state.model is not None, "monitoring needs a fitted model"
    was_pending = state.drift_flag

    unseen = sorted(set(instance.features) - state.known_attributes)
    if unseen and not state.drift_flag:
        state.flag(NEW_ATTRIBUTE, unseen[0], state.ws)
    state.known_attributes.update(instance.features)

    predicted, _ = predict(state.model.tree, instance.features)
    correct = predicted == instance.label
    state.acc_sum += correct
    state.acc_n += 1
    state.decisions += 1
    state.correct += correct
    # kept apart from acc_sum, which a remine below resets
    state.last_accuracy = state.running_accuracy()

    state.class_counts[instance.label] += 1
    for a, value in instance.features.items():
        state.attr_sums[a] = state.attr_sums.get(a, 0.0) + value
        state.attr_ns[a] = state.attr_ns.get(a, 0) + 1

    if state.refill:
        state.refill -= 1
        if state.refill == 0 and not state.drift_flag:
            state.flag(NEW_ATTRIBUTE, state.refill_attribute, state.ws)

    if not was_pending:
        fired = _feed_detectors(state, instance, correct, window, config)
        if fired is not None:
            trigger, detail, adwin_window = fired
            state.ws = max(adwin_window, config.min_mine)
            _trim(window, state.ws)
            if not state.drift_flag:
                state.flag(trigger, detail, state.ws)
            LOGGER.info("%s drift at %s, window %d", trigger, point.id,
                        adwin_window)

    notification = None
    if state.drift_flag and len(window) >= min(state.quota, state.ws):
        notification = remine(point, state, window, config, instance.seq,
                              case_id)
    return state, notification


class Footprint(NamedTuple):
    """Sizes of the engine structures that must stay bounded."""

    open_cases: int
    closed_cases: int
    window_instances: int
    window_capacity: int
    buffered_instances: int
    buffers: int
    dfg_entries: int
    dfg_case_states: int
    adwin_buckets: int
    detectors: int


@dataclass
class PointReport:
    """Current state of one decision point, for reporting."""

    point: DecisionPoint
    model: Optional[DecisionModel]
    ws: int
    window: int
    decisions: int
    correct: int
    remine_log: list[tuple[int, str]]

    @property
    def accuracy(self) -> Optional[float]:
        """Prequential accuracy over all monitored decisions."""
        return self.correct / self.decisions if self.decisions else None


@dataclass
class RunReport:
    """Snapshot of an engine run."""

    points: list[PointReport]
    notifications: list[DriftNotification]
    accuracy_series: list[AccuracySample]
    events_seen: int
    completed_cases: int
    open_cases: int


class DecisionMiningEngine:
    """
    Discovers decision points and keeps their rules current.

    A case is taken to be complete when its last activity has never been
    followed by anything. Early in a stream that can be premature, so a
    completed case is kept among the closed cases (and its
    directly-follows state is kept) until it drops out of that bounded
    store; a later event of the case reopens it.

    Every transition of a case is buffered per source activity, so that
    a point registered late can start from the decisions taken at it
    before it was known.
    """

    def __init__(self, config: RunConfig = RunConfig(),
                 keep_series: bool = True) -> None:
        self.config = config
        self.keep_series = keep_series
        self.dfg = DfgCounter(config.epsilon)
        self.net: Optional[HeuristicsNet] = None
        self.terminals: frozenset[str] = frozenset()
        self.points: dict[str, DecisionPoint] = {}
        self.dps_data: dict[str, Window] = {}
        self.dms: dict[str, MonitorState] = {}
        self.transitions: dict[str, Window] = {}
        self.trace_dict: OrderedDict[str, CaseState] = OrderedDict()
        self.closed: OrderedDict[str, CaseState] = OrderedDict()
        self.completed_cases = 0
        self.reopened_cases = 0
        self.initial_mined = False
        self.events_seen = 0
        self.lru_evictions = 0
        self.notifications: list[DriftNotification] = []
        self.accuracy_series: list[AccuracySample] = []

    def process_event(self, event: Event) -> list[DriftNotification]:
        """Run one event through discovery, data collection and monitoring."""
        notes: list[DriftNotification] = []
        self.events_seen += 1

        observe(event, self.dfg)
        if self.events_seen % self.config.net_stride == 0:
            notes.extend(self._refresh_net())

        case = self._open_case(event.case_id)
        previous = case.events[-1].activity if case.events else None
        case.events.append(event)
        case.attributes.update(event.attributes)

        if previous is not None:
            instance = TrainingInstance(
                collect_features(case, previous, end=len(case.events) - 1),
                event.activity, event.seq)
            self._buffer(previous, instance)
            point = self.points.get(previous)
            if point is not None and event.activity in point.classes:
                case.observed_points.add(point.id)
                note = self._record_decision(point, instance, event.case_id)
                if note is not None:
                    notes.append(note)

        if event.activity in self.terminals:
            self._complete_case(event.case_id)
        if (not self.initial_mined
                and self.completed_cases >= self.config.grace):
            self._initial_mining(event.seq)

        for note in notes:
            self._notify(note)
        return notes

    def process_all(self, events: Iterable[Event]) -> RunReport:
        """Process a whole stream and return the final report."""
        for event in events:
            self.process_event(event)
        return self.report()

    def _notify(self, note: DriftNotification) -> None:
        self.notifications.append(note)
        LOGGER.warning("decision drift at %r (%s), seq %d, window %d",
                       note.dp_id, note.label, note.seq, note.adwin_window)

    def _open_case(self, case_id: str) -> CaseState:
        case = self.trace_dict.get(case_id)
        if case is not None:
            self.trace_dict.move_to_end(case_id)
            return case
        case = self.closed.pop(case_id, None)
        if case is not None:
            # it had not ended after all
            self.completed_cases -= 1
            self.reopened_cases += 1
            LOGGER.debug("case %r continues after %r", case_id,
                         case.events[-1].activity)
        else:
            case = CaseState()
        self.trace_dict[case_id] = case
        self._bound_open_cases()
        return case

    def _buffer(self, activity: str, instance: TrainingInstance) -> None:
        buffer = self.transitions.get(activity)
        if buffer is None:
            buffer = deque(maxlen=self.config.grace)
            self.transitions[activity] = buffer
        buffer.append(instance)

    def _buffered(self, point: DecisionPoint,
                  known: Optional[frozenset[str]] = None) -> Window:
        """
        Buffered decisions at a point that went to one of its classes.

        With `known`, only decisions from the first one that went
        elsewhere onwards are kept.
        """
        buffered = list(self.transitions.get(point.id, ()))
        if known is not None:
            start = next((i for i, inst in enumerate(buffered)
                          if inst.label not in known), len(buffered))
            buffered = buffered[start:]
        window = deque(inst for inst in buffered
                       if inst.label in point.classes)
        _trim(window, self.config.grace)
        return window

    def _record_decision(self, point: DecisionPoint,
                         instance: TrainingInstance,
                         case_id: str) -> Optional[DriftNotification]:
        window = self.dps_data[point.id]
        state = self.dms[point.id]
        window.append(instance)
        _trim(window, state.ws)

        if state.model is None:
            # not mined yet: collect only
            state.known_attributes.update(instance.features)
            if (self.initial_mined
                    and len(window) >= min(state.quota, state.ws)):
                return remine(point, state, window, self.config,
                              instance.seq, case_id)
            return None

        state, note = monitor_decision_point(
            point, instance, state, window, self.config, case_id)
        if self.keep_series:
            self.accuracy_series.append(
                AccuracySample(instance.seq, point.id, state.last_accuracy))
        return note

    def _initial_mining(self, seq: int) -> None:
        self.initial_mined = True
        LOGGER.info("grace period over after %d completed cases",
                    self.completed_cases)
        for pid, point in sorted(self.points.items()):
            window = self.dps_data[pid]
            state = self.dms[pid]
            if state.model is None and len(window) >= self.config.min_mine:
                remine(point, state, window, self.config, seq)

    def _new_state(self, point: DecisionPoint) -> MonitorState:
        state = MonitorState(point, ws=self.config.grace,
                             quota=self.config.min_mine)
        if self.initial_mined:
            state.pending = (STRUCTURAL_ADDED, None)
            state.quota = self.config.grace
        state.reset_statistics(self.config)
        return state

    def _refresh_net(self) -> list[DriftNotification]:
        edges = snapshot(self.dfg)
        self.net = mine_heuristics_net(edges, self.config.dep_threshold)
        self.terminals = terminal_activities(edges)
        change = diff(set(self.points.values()),
                      discover_decision_points(self.net))
        notes: list[DriftNotification] = []
        seq = self.events_seen - 1

        for point in sorted(change.added_points):
            LOGGER.info("new decision point %s", point)
            # a point found late starts where the branching began
            buffered = self.transitions.get(point.id)
            known = (frozenset({buffered[0].label})
                     if self.initial_mined and buffered else None)
            self.points[point.id] = point
            self.dps_data[point.id] = self._buffered(point, known)
            self.dms[point.id] = self._new_state(point)

        for point in sorted(change.removed_points):
            LOGGER.info("decision point %s disappeared", point)
            state = self.dms.pop(point.id)
            del self.points[point.id]
            del self.dps_data[point.id]
            if state.model is not None:
                notes.append(DriftNotification(
                    seq, point.id, STRUCTURAL_REMOVED, None,
                    state.model.rules.text(), "", 0))

        for point, old_classes, new_classes in sorted(
                change.class_changed_points):
            LOGGER.info("classes of %r changed from %s to %s", point.id,
                        sorted(old_classes), sorted(new_classes))
            state = self.dms[point.id]
            self.points[point.id] = point
            state.point = point
            self.dps_data[point.id] = self._buffered(point, old_classes)
            state.ws = self.config.grace
            state.reset_statistics(self.config)
            if state.model is not None:
                state.flag(STRUCTURAL_CLASS_CHANGE, None, state.ws)
                state.quota = self.config.grace

        # cases that ended before their last activity was known as terminal
        for case_id in [cid for cid, case in self.trace_dict.items()
                        if case.events
                        and case.events[-1].activity in self.terminals]:
            self._complete_case(case_id)
        return notes

    def _complete_case(self, case_id: str) -> None:
        case = self.trace_dict.pop(case_id, None)
        if case is None:
            return
        self.completed_cases += 1
        self.closed[case_id] = case
        while len(self.closed) > self.config.max_open_cases:
            done, _ = self.closed.popitem(last=False)
            self.dfg.forget_case(done)

    def _bound_open_cases(self) -> None:
        while len(self.trace_dict) > self.config.max_open_cases:
            case_id, _ = self.trace_dict.popitem(last=False)
            self.dfg.forget_case(case_id)
            self.lru_evictions += 1
            LOGGER.warning("open-case limit %d reached, evicting case %r",
                           self.config.max_open_cases, case_id)

    def memory_footprint(self) -> Footprint:
        """Current sizes of the bounded state."""
        return Footprint(
            open_cases=len(self.trace_dict),
            closed_cases=len(self.closed),
            window_instances=sum(len(w) for w in self.dps_data.values()),
            window_capacity=sum(s.ws for s in self.dms.values()),
            buffered_instances=sum(len(b)
                                   for b in self.transitions.values()),
            buffers=len(self.transitions),
            dfg_entries=len(self.dfg),
            dfg_case_states=len(self.dfg.last_activity),
            adwin_buckets=sum(s.bucket_count() for s in self.dms.values()),
            detectors=sum(1 + len(s.adwin_class) + len(s.adwin_attr)
                          for s in self.dms.values()),
        )

    def report(self) -> RunReport:
        """Snapshot of points, rules, remines, accuracies and drifts."""
        points = [
            PointReport(point, self.dms[pid].model, self.dms[pid].ws,
                        len(self.dps_data[pid]), self.dms[pid].decisions,
                        self.dms[pid].correct,
                        list(self.dms[pid].remine_log))
            for pid, point in sorted(self.points.items())
        ]
        return RunReport(points, list(self.notifications),
                         list(self.accuracy_series), self.events_seen,
                         self.completed_cases, len(self.trace_dict))
