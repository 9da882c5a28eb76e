"""
Synthetic loan-application logs with sudden decision drifts.

Every case runs Apply -> Check application data -> one check ->
Overall Assessment -> Inform Customer. The check is chosen by a
ground-truth rule on the case's attributes; at case `drift_at` the rule
(or the process) changes according to the scenario:

  baseline  no drift
  sd1       amount_loan threshold 80000 -> 50000
  sd2       income logged from the drift on, and `income > 3000` joins
            the Normal Check condition
  sd3       threshold 70000, then a third class Simple Check below 30000
  sd4       a second decision after Overall Assessment: acceptance or
            rejection letter, depending on risk_level and amount_loan
"""

from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Iterator, Mapping, NamedTuple, TextIO

import numpy as np

SCENARIOS = ("baseline", "sd1", "sd2", "sd3", "sd4")

APPLY = "Apply"
CHECK = "Check application data"
NORMAL = "Normal Check"
EXTENSIVE = "Extensive Check"
SIMPLE = "Simple Check"
ASSESS = "Overall Assessment"
ACCEPT = "Write Acceptance Letter"
REJECT = "Write Rejection Letter"
INFORM = "Inform Customer"

# inclusive ranges, sampled uniformly over the integers
ATTRIBUTE_RANGES = {
    "amount_loan": (10_000, 120_000),
    "income": (1_000, 6_000),
    "age": (18, 75),
    "risk_level": (0, 6),
}
COLUMNS = ("case_id", "activity", "timestamp",
           "amount_loan", "age", "income", "risk_level")
START_TIME = datetime(2024, 1, 1)


@dataclass(frozen=True)
class Scenario:
    """What to generate; the seed fixes every random choice."""

    kind: str
    n_cases: int = 5000
    drift_at: int = 2500
    seed: int = 42
    noise: float = 0.0
    interleave: int = 1

    def __post_init__(self) -> None:
        if self.kind not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.kind!r}; "
                             f"choose from {', '.join(SCENARIOS)}")
        if self.n_cases < 1:
            raise ValueError("n_cases must be positive")
        if not 0 <= self.drift_at < self.n_cases:
            raise ValueError("drift_at must be in [0, n_cases)")
        if not 0.0 <= self.noise < 1.0:
            raise ValueError("noise must be in [0, 1)")
        if self.interleave < 1:
            raise ValueError("interleave must be >= 1")

    def drifted(self, case_index: int) -> bool:
        """Whether a case runs under the post-drift rules."""
        return self.kind != "baseline" and case_index >= self.drift_at


def decision_classes(scenario: Scenario,
                     case_index: int) -> dict[str, tuple[str, ...]]:
    """Classes of each decision point in the phase of a case."""
    post = scenario.drifted(case_index)
    classes = {CHECK: (NORMAL, EXTENSIVE)}
    if scenario.kind == "sd3" and post:
        classes[CHECK] = (SIMPLE, NORMAL, EXTENSIVE)
    if scenario.kind == "sd4" and post:
        classes[ASSESS] = (ACCEPT, REJECT)
    return classes


def oracle_label(scenario: Scenario, case_index: int,
                 attributes: Mapping[str, float]) -> dict[str, str]:
    """Ground-truth class per decision point for a case's attributes."""
    post = scenario.drifted(case_index)
    amount = attributes["amount_loan"]
    labels: dict[str, str] = {}

    if scenario.kind == "sd1" and post:
        labels[CHECK] = NORMAL if amount <= 50_000 else EXTENSIVE
    elif scenario.kind == "sd2" and post:
        labels[CHECK] = (NORMAL if amount <= 80_000
                         and attributes["income"] > 3_000 else EXTENSIVE)
    elif scenario.kind == "sd3":
        if post and amount <= 30_000:
            labels[CHECK] = SIMPLE
        else:
            labels[CHECK] = NORMAL if amount <= 70_000 else EXTENSIVE
    else:
        labels[CHECK] = NORMAL if amount <= 80_000 else EXTENSIVE

    if scenario.kind == "sd4" and post:
        risk = attributes["risk_level"]
        accept = ((risk < 4 and amount < 80_000)
                  or (risk <= 1 and amount >= 80_000))
        labels[ASSESS] = ACCEPT if accept else REJECT
    return labels


def truth_rules(scenario: Scenario,
                case_index: int) -> dict[str, list[str]]:
    """The rules in force for a case, as text."""
    post = scenario.drifted(case_index)
    kind = scenario.kind
    if kind == "sd1" and post:
        check = ["IF amount_loan <= 50000 THEN Normal Check",
                 "IF amount_loan > 50000 THEN Extensive Check"]
    elif kind == "sd2" and post:
        check = ["IF amount_loan <= 80000 AND income > 3000 "
                 "THEN Normal Check",
                 "OTHERWISE Extensive Check"]
    elif kind == "sd3" and post:
        check = ["IF amount_loan <= 30000 THEN Simple Check",
                 "IF amount_loan > 30000 AND amount_loan <= 70000 "
                 "THEN Normal Check",
                 "IF amount_loan > 70000 THEN Extensive Check"]
    elif kind == "sd3":
        check = ["IF amount_loan <= 70000 THEN Normal Check",
                 "IF amount_loan > 70000 THEN Extensive Check"]
    else:
        check = ["IF amount_loan <= 80000 THEN Normal Check",
                 "IF amount_loan > 80000 THEN Extensive Check"]
    rules = {CHECK: check}
    if kind == "sd4" and post:
        rules[ASSESS] = [
            "IF risk_level < 4 AND amount_loan < 80000 "
            "THEN Write Acceptance Letter",
            "IF risk_level <= 1 AND amount_loan >= 80000 "
            "THEN Write Acceptance Letter",
            "OTHERWISE Write Rejection Letter",
        ]
    return rules


def truth(scenario: Scenario) -> dict[str, Any]:
    """Ground truth per phase, as written to the sidecar file."""
    phases = [(0, scenario.drift_at if scenario.kind != "baseline"
               else scenario.n_cases)]
    if scenario.kind != "baseline":
        phases.append((scenario.drift_at, scenario.n_cases))
    return {
        "scenario": scenario.kind,
        "n_cases": scenario.n_cases,
        "drift_at": scenario.drift_at,
        "seed": scenario.seed,
        "noise": scenario.noise,
        "phases": [
            {"from_case": lo, "to_case": hi,
             "rules": truth_rules(scenario, lo)}
            for lo, hi in phases
        ],
    }


def sample_attributes(scenario: Scenario, case_index: int,
                      rng: np.random.Generator) -> dict[str, int]:
    """Draw the attributes a case logs in its phase."""
    def draw(name: str) -> int:
        lo, hi = ATTRIBUTE_RANGES[name]
        return int(rng.integers(lo, hi + 1))

    attributes = {"amount_loan": draw("amount_loan"), "age": draw("age")}
    if scenario.kind == "sd2" and scenario.drifted(case_index):
        attributes["income"] = draw("income")
    if scenario.kind == "sd4" and scenario.drifted(case_index):
        attributes["risk_level"] = draw("risk_level")
    return attributes


class CaseTrace(NamedTuple):
    """One generated case: its id, attributes, labels and activities."""

    case_id: str
    attributes: dict[str, int]
    labels: dict[str, str]
    steps: list[tuple[str, dict[str, int]]]


def _noisy(label: str, classes: tuple[str, ...], noise: float,
           rng: np.random.Generator) -> str:
    if noise > 0.0 and rng.random() < noise:
        others = [c for c in classes if c != label]
        return others[int(rng.integers(len(others)))]
    return label


def generate_case(scenario: Scenario, case_index: int,
                  rng: np.random.Generator) -> CaseTrace:
    """Draw one case: attributes, labels and the activities it runs."""
    attributes = sample_attributes(scenario, case_index, rng)
    labels = oracle_label(scenario, case_index, attributes)
    classes = decision_classes(scenario, case_index)
    labels = {dp: _noisy(c, classes[dp], scenario.noise, rng)
              for dp, c in labels.items()}

    apply_attrs = {k: v for k, v in attributes.items() if k != "risk_level"}
    assess_attrs = ({"risk_level": attributes["risk_level"]}
                    if "risk_level" in attributes else {})
    steps = [(APPLY, apply_attrs), (CHECK, {}), (labels[CHECK], {}),
             (ASSESS, assess_attrs)]
    if ASSESS in labels:
        steps.append((labels[ASSESS], {}))
    steps.append((INFORM, {}))
    width = len(str(scenario.n_cases - 1))
    return CaseTrace(f"case_{case_index:0{width}d}", attributes, labels,
                     steps)


def cases(scenario: Scenario) -> Iterator[CaseTrace]:
    """All cases of a scenario in case order."""
    rng = np.random.default_rng(scenario.seed)
    for i in range(scenario.n_cases):
        yield generate_case(scenario, i, rng)


def event_rows(scenario: Scenario) -> Iterator[dict[str, Any]]:
    """
    Log rows in stream order.

    With interleave k, up to k cases are open at once and emit their
    events round-robin.
    """
    pending = cases(scenario)
    active: deque[tuple[str, Iterator[tuple[str, dict[str, int]]]]] = deque()
    seq = 0
    exhausted = False
    while True:
        while not exhausted and len(active) < scenario.interleave:
            case = next(pending, None)
            if case is None:
                exhausted = True
                break
            active.append((case.case_id, iter(case.steps)))
        if not active:
            return
        for _ in range(len(active)):
            case_id, steps = active.popleft()
            step = next(steps, None)
            if step is None:
                continue
            activity, attrs = step
            row: dict[str, Any] = {
                "case_id": case_id,
                "activity": activity,
                "timestamp": (START_TIME
                              + timedelta(minutes=seq)).isoformat(),
            }
            row.update(attrs)
            yield row
            seq += 1
            active.append((case_id, steps))


def generate(scenario: Scenario, out: TextIO) -> int:
    """Write a scenario's log in the event-log schema; returns #events."""
    writer = csv.DictWriter(out, fieldnames=COLUMNS, restval="",
                            lineterminator="\n")
    writer.writeheader()
    n = 0
    for row in event_rows(scenario):
        writer.writerow(row)
        n += 1
    return n


def truth_path(log_path: Path) -> Path:
    """Sidecar path for the ground truth of a log: `<stem>.truth.json`."""
    return log_path.with_name(log_path.stem + ".truth.json")


def generate_file(scenario: Scenario, log_path: Path) -> tuple[int, Path]:
    """Write the log and its ground-truth sidecar."""
    with open(log_path, "w", encoding="utf-8", newline="") as out:
        n = generate(scenario, out)
    sidecar = truth_path(log_path)
    with open(sidecar, "w", encoding="utf-8") as out:
        json.dump(truth(scenario), out, indent=2)
        out.write("\n")
    return n, sidecar
