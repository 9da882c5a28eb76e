"""Test of the event-log reader and the event queue."""

import io
import threading

import pytest

from stream_ingest import (
    Event,
    EventQueue,
    EventQueueFull,
    MalformedRowError,
    ParseWarnings,
    SourceError,
    fill_queue,
    parse_event,
    replay,
)

HEADER = ["case_id", "activity", "timestamp", "amount_loan", "age"]


def test_parse_event() -> None:
    """Numeric attributes are parsed, empty cells are not logged."""
    event = parse_event(["c1", "Apply", "2024-01-01T00:00:00", "50000", ""],
                        HEADER, seq=7)
    assert event == Event("c1", "Apply", 7, {"amount_loan": 50000.0},
                          "2024-01-01T00:00:00")


def test_parse_event_non_numeric() -> None:
    """Non-numeric values are skipped and counted."""
    warnings = ParseWarnings()
    event = parse_event(["c1", "Apply", "", "lots", "nan"], HEADER,
                        warnings=warnings)
    assert event.attributes == {}
    assert event.timestamp is None
    assert warnings.non_numeric == 2
    assert warnings.skipped_columns == {"amount_loan": 1, "age": 1}


@pytest.mark.parametrize("row", [
    ["c1", "Apply"],
    ["", "Apply", "", "", ""],
    ["c1", " ", "", "", ""],
])
def test_parse_event_malformed(row: list[str]) -> None:
    """Short rows and empty identifiers are malformed."""
    with pytest.raises(MalformedRowError):
        parse_event(row, HEADER, row_number=3)


def test_replay_in_row_order() -> None:
    """Row order is stream order, whatever the timestamps say."""
    log = io.StringIO(
        "case_id,activity,timestamp,amount_loan\n"
        "c1,Apply,2024-01-02,100\n"
        "c2,Apply,2024-01-01,200\n"
        "c1,Check,2024-01-03,\n"
    )
    events = list(replay(log))
    assert [(e.case_id, e.activity, e.seq) for e in events] == [
        ("c1", "Apply", 0), ("c2", "Apply", 1), ("c1", "Check", 2)
    ]
    assert events[1].attributes == {"amount_loan": 200.0}
    assert events[2].attributes == {}


def test_replay_skips_malformed_rows() -> None:
    """A malformed row is skipped and sequence numbers stay dense."""
    warnings = ParseWarnings()
    log = io.StringIO(
        "case_id,activity,x\n"
        "c1,A,1\n"
        "c1,B\n"
        "\n"
        "c1,C,3\n"
    )
    events = list(replay(log, warnings=warnings))
    assert [(e.activity, e.seq) for e in events] == [("A", 0), ("C", 1)]
    assert warnings.malformed_rows == 1


def test_replay_empty() -> None:
    """An empty log is an empty stream."""
    assert list(replay(io.StringIO(""))) == []
    assert list(replay(io.StringIO("case_id,activity\n"))) == []


def test_replay_errors(tmp_path) -> None:
    """Missing files and missing columns are source errors."""
    with pytest.raises(SourceError):
        replay(tmp_path / "nope.csv")
    with pytest.raises(SourceError):
        replay(io.StringIO("case,activity\nc1,A\n"))


def test_replay_not_utf8(tmp_path) -> None:
    """Undecodable bytes are a source error, not a crash."""
    path = tmp_path / "log.csv"
    path.write_bytes(b"case_id,activity\nc1,A\nc2,\xff\xfeB\n")
    with pytest.raises(SourceError, match="cannot decode"):
        list(replay(path))


def test_replay_delimiter(tmp_path) -> None:
    """Other delimiters work when asked for."""
    path = tmp_path / "log.tsv"
    path.write_text("case_id\tactivity\tx\nc1\tA\t2.5\n", encoding="utf-8")
    events = list(replay(path, delimiter="\t"))
    assert events == [Event("c1", "A", 0, {"x": 2.5}, None)]


def test_queue_full() -> None:
    """A full queue raises rather than dropping events."""
    q = EventQueue(2)
    q.put(Event("c", "A", 0, {}))
    q.put(Event("c", "B", 1, {}))
    with pytest.raises(EventQueueFull):
        q.put(Event("c", "C", 2, {}))
    with pytest.raises(EventQueueFull):
        q.put(Event("c", "C", 2, {}), timeout=0.01)
    assert len(q) == 2


def test_queue_producer_consumer() -> None:
    """A blocking producer hands every event over in order."""
    events = [Event("c", str(i), i, {}) for i in range(1000)]
    q = EventQueue(8)
    producer = threading.Thread(target=fill_queue, args=(events, q))
    producer.start()
    received = list(q)
    producer.join()
    assert received == events


def test_fill_queue_closes_on_error() -> None:
    """The queue is closed even when the producer fails."""
    def broken():
        yield Event("c", "A", 0, {})
        raise OSError("disk gone")

    q = EventQueue(10)
    with pytest.raises(OSError):
        fill_queue(broken(), q)
    assert list(q) == [Event("c", "A", 0, {})]


def test_queue_capacity() -> None:
    """Capacity must be positive."""
    with pytest.raises(ValueError):
        EventQueue(0)
