"""Writing run reports: rules, drift events, accuracy series, points."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Optional, TextIO

from monitor_engine import PointReport, RunReport
from rule_miner import tree_to_dict

RULES_FILE = "rules.txt"
DRIFT_EVENTS_FILE = "drift_events.csv"
ACCURACY_FILE = "accuracy_series.csv"
POINTS_FILE = "decision_points.json"


def rule_hash(text: str) -> str:
    """Short digest of a rule text; empty text hashes to the empty string."""
    if not text:
        return ""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _classes(point: PointReport) -> str:
    return "{" + ", ".join(sorted(point.point.classes)) + "}"


def write_rules(report: RunReport, out: TextIO,
                banner: Optional[str] = None) -> None:
    """Current rule text per decision point."""
    if banner:
        print(f"# {banner}", file=out)
    for p in report.points:
        print(f"## DP {p.point.id} -> {_classes(p)}", file=out)
        if p.model is None:
            print("(not mined yet)", file=out)
        else:
            print(p.model.rules.text(), file=out)
            print(f"trained_on={p.model.trained_on} at seq={p.model.seq}",
                  file=out)
        print(file=out)


def write_drift_events(report: RunReport, out: TextIO) -> None:
    """One CSV row per notification, rules reduced to their hashes."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["seq", "dp_id", "trigger", "adwin_window",
                     "old_rule_hash", "new_rule_hash"])
    for n in report.notifications:
        writer.writerow([n.seq, n.dp_id, n.label, n.adwin_window,
                         rule_hash(n.old_rules), rule_hash(n.new_rules)])


def write_accuracy_series(report: RunReport, out: TextIO) -> None:
    """Running prequential accuracy after every scored decision."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["seq", "dp_id", "running_accuracy"])
    for s in report.accuracy_series:
        writer.writerow([s.seq, s.dp_id, f"{s.running_accuracy:.6f}"])


def write_decision_points(report: RunReport, out: TextIO) -> None:
    """Points, their classes and window sizes as sorted JSON."""
    json.dump({
        "decision_points": [
            {
                "id": p.point.id,
                "classes": sorted(p.point.classes),
                "window_size": p.ws,
                "remines": len(p.remine_log),
            }
            for p in report.points
        ]
    }, out, indent=2, sort_keys=True)
    out.write("\n")


def write_trees(report: RunReport, out: TextIO) -> None:
    """The current tree of every mined point as JSON, for debugging."""
    json.dump({p.point.id: tree_to_dict(p.model.tree)
               for p in report.points if p.model is not None},
              out, indent=2, sort_keys=True)
    out.write("\n")


def write_reports(report: RunReport, out_dir: Path,
                  banner: Optional[str] = None) -> list[Path]:
    """Write all four report files into `out_dir`."""
    out_dir.mkdir(parents=True, exist_ok=True)
    writers = [
        (RULES_FILE, lambda f: write_rules(report, f, banner)),
        (DRIFT_EVENTS_FILE, lambda f: write_drift_events(report, f)),
        (ACCURACY_FILE, lambda f: write_accuracy_series(report, f)),
        (POINTS_FILE, lambda f: write_decision_points(report, f)),
    ]
    paths = []
    for name, write in writers:
        path = out_dir / name
        with open(path, "w", encoding="utf-8", newline="") as f:
            write(f)
        paths.append(path)
    return paths


def summary_lines(report: RunReport) -> list[str]:
    """One line per decision point: accuracy and number of remines."""
    lines = [f"events={report.events_seen} "
             f"completed_cases={report.completed_cases} "
             f"drift_events={len(report.notifications)}"]
    for p in report.points:
        acc = "n/a" if p.accuracy is None else f"{p.accuracy:.3f}"
        lines.append(f"{p.point.id}: accuracy={acc} decisions={p.decisions} "
                     f"remines={len(p.remine_log)} ws={p.ws}")
    return lines
