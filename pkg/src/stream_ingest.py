"""Reading event logs into an ordered event stream."""

from __future__ import annotations

import csv
import logging
import math
import queue
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import (
    Iterable, Iterator, NamedTuple, Optional, Sequence, TextIO, Union
)

LOGGER = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("case_id", "activity")
TIMESTAMP_COLUMN = "timestamp"
DEFAULT_QUEUE_CAPACITY = 100_000

Source = Union[str, Path, TextIO]


class Event(NamedTuple):
    """One element of the event stream."""

    case_id: str
    activity: str
    seq: int
    attributes: dict[str, float]
    timestamp: Optional[str] = None


class MalformedRowError(ValueError):
    """A row that cannot be turned into an event."""

    def __init__(self, row_number: int, reason: str) -> None:
        super().__init__(f"row {row_number}: {reason}")
        self.row_number = row_number


class SourceError(OSError):
    """The event source cannot be read or lacks the required columns."""


class EventQueueFull(RuntimeError):
    """Raised when an event is offered to a full queue."""


@dataclass
class ParseWarnings:
    """Counters for rows and values the reader had to skip."""

    non_numeric: int = 0
    malformed_rows: int = 0
    skipped_columns: dict[str, int] = field(default_factory=dict)


def _parse_number(text: str) -> Optional[float]:
    try:
        value = float(text)
    except ValueError:
        return None
    # nan/inf spell as numbers but are useless as attribute values
    return value if math.isfinite(value) else None


def parse_event(row: Sequence[str], header: Sequence[str],
                seq: int = 0, row_number: int = 0,
                warnings: Optional[ParseWarnings] = None) -> Event:
    """
    Build an event from a delimited record.

    Columns other than case_id, activity and timestamp are attribute
    candidates. Empty cells mean "not logged"; cells that do not parse as
    numbers are skipped and counted in `warnings`.
    """
    for column in REQUIRED_COLUMNS:
        if column not in header:
            raise MalformedRowError(row_number, f"no '{column}' column")
    if len(row) != len(header):
        raise MalformedRowError(
            row_number, f"expected {len(header)} fields, got {len(row)}")

    record = dict(zip(header, row))
    case_id = record["case_id"].strip()
    activity = record["activity"].strip()
    if not case_id:
        raise MalformedRowError(row_number, "empty case_id")
    if not activity:
        raise MalformedRowError(row_number, "empty activity")

    attributes: dict[str, float] = {}
    for name, text in record.items():
        if name in REQUIRED_COLUMNS or name == TIMESTAMP_COLUMN:
            continue
        text = text.strip()
        if not text:
            continue
        value = _parse_number(text)
        if value is None:
            if warnings is not None:
                warnings.non_numeric += 1
                warnings.skipped_columns[name] = \
                    warnings.skipped_columns.get(name, 0) + 1
            LOGGER.debug("row %d: non-numeric %s=%r skipped",
                         row_number, name, text)
            continue
        attributes[name] = value

    timestamp = record.get(TIMESTAMP_COLUMN) or None
    return Event(case_id, activity, seq, attributes, timestamp)


def _open(source: Source) -> TextIO:
    if isinstance(source, (str, Path)):
        if str(source) == "-":
            return sys.stdin
        try:
            return open(source, newline="", encoding="utf-8")
        except OSError as err:
            raise SourceError(f"cannot read {source}: {err}") from err
    return source


def _rows(f: TextIO, close: bool, header: list[str],
          rows: Iterator[list[str]],
          warnings: ParseWarnings) -> Iterator[Event]:
    seq = 0
    try:
        # row 1 is the header
        for row_number, row in enumerate(rows, start=2):
            if not row:
                continue
            try:
                event = parse_event(row, header, seq, row_number, warnings)
            except MalformedRowError as err:
                warnings.malformed_rows += 1
                LOGGER.warning("skipping malformed %s", err)
                continue
            yield event
            seq += 1
    finally:
        if close:
            f.close()
        if warnings.non_numeric:
            LOGGER.warning("%d non-numeric attribute value(s) skipped",
                           warnings.non_numeric)


def _decoded(rows: Iterator[list[str]], name: str) -> Iterator[list[str]]:
    try:
        yield from rows
    except (UnicodeDecodeError, csv.Error) as err:
        raise SourceError(f"cannot decode {name}: {err}") from err


def replay(source: Source, delimiter: str = ",",
           warnings: Optional[ParseWarnings] = None) -> Iterator[Event]:
    """
    Stream the events of a log in row order.

    Row order is stream order; timestamps are carried along but never used
    for sorting. Malformed rows are skipped with a warning. Reading from a
    pipe blocks until more input arrives or the pipe closes.

    The source is opened and its header checked before the first event is
    requested, so an unreadable log fails here with SourceError. Bytes
    that are not UTF-8 raise SourceError when they are reached.
    """
    if warnings is None:
        warnings = ParseWarnings()
    f = _open(source)
    close = f is not source and f is not sys.stdin
    name = str(source) if isinstance(source, (str, Path)) else "input"
    rows = _decoded(csv.reader(f, delimiter=delimiter), name)
    header = next(rows, None)
    if header is None:
        if close:
            f.close()
        return iter(())
    header = [column.strip() for column in header]
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        if close:
            f.close()
        raise SourceError(
            f"event log lacks required column(s): {', '.join(missing)}")
    return _rows(f, close, header, rows, warnings)


_CLOSED = object()


class EventQueue:
    """
    Bounded FIFO between the log reader and the engine.

    Supports one producer and one consumer. Offering an event to a full
    queue raises EventQueueFull once the optional timeout has run out;
    events are never dropped.
    """

    def __init__(self, capacity: int = DEFAULT_QUEUE_CAPACITY) -> None:
        if capacity < 1:
            raise ValueError("queue capacity must be positive")
        self.capacity = capacity
        self._queue: queue.Queue[object] = queue.Queue(maxsize=capacity)

    def __len__(self) -> int:
        return self._queue.qsize()

    def put(self, event: Event, timeout: Optional[float] = 0.0) -> None:
        """
        Enqueue an event.

        With timeout 0 a full queue is an immediate error; None waits for
        space indefinitely.
        """
        try:
            if timeout == 0.0:
                self._queue.put_nowait(event)
            else:
                self._queue.put(event, timeout=timeout)
        except queue.Full as err:
            raise EventQueueFull(
                f"event queue full ({self.capacity} events)") from err

    def close(self) -> None:
        """Mark the end of the stream; waits for room if the queue is full."""
        self._queue.put(_CLOSED)

    def get(self) -> Optional[Event]:
        """Take the next event, or None once the queue is closed."""
        item = self._queue.get()
        if item is _CLOSED:
            return None
        assert isinstance(item, Event)
        return item

    def __iter__(self) -> Iterator[Event]:
        while (event := self.get()) is not None:
            yield event


def fill_queue(events: Iterable[Event], events_queue: EventQueue,
               timeout: Optional[float] = None) -> int:
    """Producer loop: move events into the queue, then close it."""
    count = 0
    try:
        for event in events:
            events_queue.put(event, timeout=timeout)
            count += 1
    finally:
        events_queue.close()
    return count
