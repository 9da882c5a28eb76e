"""Directly-follows graph over an event stream, kept small by lossy counting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, TextIO

from stream_ingest import Event

DEFAULT_EPSILON = 0.001

Pair = tuple[str, str]


@dataclass
class DfgEntry:
    """Count of one activity pair since it was (re)inserted."""

    count: int
    delta: int


class WeightedEdge(NamedTuple):
    """An edge of the snapshot: `source` directly followed by `target`."""

    source: str
    target: str
    count: int


@dataclass
class DfgCounter:
    """
    Lossy-counted directly-follows pairs.

    Pairs are the stream items. The stream is cut into buckets of
    w = ceil(1/epsilon) pairs; at each bucket boundary every entry whose
    count plus undercount bound does not exceed the bucket id is dropped.
    The stored count of a pair never exceeds its true frequency and
    undercounts it by at most epsilon times the number of pairs seen.
    """

    epsilon: float = DEFAULT_EPSILON
    entries: dict[Pair, DfgEntry] = field(default_factory=dict)
    items_seen: int = 0
    last_activity: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must be in (0, 1)")
        self.width = math.ceil(1 / self.epsilon)

    def __len__(self) -> int:
        return len(self.entries)

    def add_pair(self, pair: Pair) -> None:
        """Count one occurrence of a pair."""
        self.items_seen += 1
        bucket = math.ceil(self.items_seen / self.width)
        entry = self.entries.get(pair)
        if entry is None:
            self.entries[pair] = DfgEntry(1, bucket - 1)
        else:
            entry.count += 1
        if self.items_seen % self.width == 0:
            self._evict(bucket)

    def _evict(self, bucket: int) -> None:
        stale = [pair for pair, entry in self.entries.items()
                 if entry.count + entry.delta <= bucket]
        for pair in stale:
            del self.entries[pair]

    def count(self, pair: Pair) -> int:
        """Stored count of a pair, zero if it is not tracked."""
        entry = self.entries.get(pair)
        return entry.count if entry is not None else 0

    def forget_case(self, case_id: str) -> None:
        """Drop the per-case state once the case has ended or was evicted."""
        self.last_activity.pop(case_id, None)


def observe(event: Event, counter: DfgCounter) -> DfgCounter:
    """Feed one event to the counter; the first event of a case forms no pair."""
    previous = counter.last_activity.get(event.case_id)
    if previous is not None:
        counter.add_pair((previous, event.activity))
    counter.last_activity[event.case_id] = event.activity
    return counter


def snapshot(counter: DfgCounter) -> list[WeightedEdge]:
    """All surviving pairs with their counts, sorted by pair."""
    return [
        WeightedEdge(a, b, entry.count)
        for (a, b), entry in sorted(counter.entries.items())
    ]


def terminal_activities(edges: list[WeightedEdge]) -> frozenset[str]:
    """
    Activities that were seen but were never followed by anything.

    Unlike the sinks of a heuristics net this ignores thresholds: one
    surviving outgoing pair is enough to make an activity non-terminal.
    """
    sources = {e.source for e in edges}
    return frozenset(e.target for e in edges if e.target not in sources)


def write_snapshot_json(edges: list[WeightedEdge], out: TextIO) -> None:
    """Write a snapshot as a JSON list of {from, to, count} objects."""
    json.dump(
        [{"from": e.source, "to": e.target, "count": e.count} for e in edges],
        out, indent=2
    )
    out.write("\n")
