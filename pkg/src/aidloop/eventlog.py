"""Append-only event log: one JSON record per line, replayable.

The on-disk format is a contract shared with out-of-process verifiers,
so it is pinned down to the byte: UTF-8 lines, keys in a fixed order
(schema_version, seq, at, type, payload), timestamps as
YYYY-MM-DDThh:mm:ssZ, numbers in decimal with at most 6 fractional
digits, and no NaN or infinities. See docs/log-format.md for the full
schema including every payload shape.

Appends are atomic at line granularity and fsynced before returning;
any number of readers may consume fully-written prefixes concurrently.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Optional

from aidloop.core import require_utc

SCHEMA_VERSION = 1

EVENT_TYPES = ("cgm", "loop", "pump", "alert", "settings")


class LogError(Exception):
    """Malformed or invariant-violating log content. `line` is 1-based."""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class EventRecord:
    seq: int
    at: datetime
    type: str
    payload: dict

    def __post_init__(self):
        object.__setattr__(self, "at", require_utc(self.at))
        if self.type not in EVENT_TYPES:
            raise ValueError(f"unknown event type {self.type!r}")


def format_timestamp(at: datetime) -> str:
    return at.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)


def format_number(x: float) -> str:
    """Decimal rendering with at most 6 fractional digits, no exponent."""
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise TypeError(f"not a number: {x!r}")
    if isinstance(x, int):
        return str(x)
    if math.isnan(x) or math.isinf(x):
        raise ValueError("NaN/Inf are not representable in the log")
    text = f"{x:.6f}".rstrip("0").rstrip(".")
    if text in ("-0", ""):
        text = "0"
    return text


def _dump_value(value: Any) -> str:
    """Serialize payload values with deterministic number formatting.

    Dict key order is preserved as insertion order; callers build
    payloads in the documented field order.
    """
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return format_number(value)
    if isinstance(value, dict):
        items = ", ".join(f"{json.dumps(k)}: {_dump_value(v)}" for k, v in value.items())
        return "{" + items + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_dump_value(v) for v in value) + "]"
    raise TypeError(f"unsupported payload value: {value!r}")


def serialize_record(record: EventRecord) -> str:
    return (
        f'{{"schema_version": {SCHEMA_VERSION}, "seq": {record.seq}, '
        f'"at": "{format_timestamp(record.at)}", "type": {json.dumps(record.type)}, '
        f'"payload": {_dump_value(record.payload)}}}'
    )


def _reject_constant(text: str):
    raise ValueError(f"non-finite number {text!r} is not permitted")


def parse_record(line: str, line_no: Optional[int] = None) -> EventRecord:
    try:
        raw = json.loads(line, parse_constant=_reject_constant)
    except ValueError as e:
        raise LogError(f"invalid record: {e}", line_no) from e
    if not isinstance(raw, dict):
        raise LogError("record is not an object", line_no)
    try:
        if raw["schema_version"] != SCHEMA_VERSION:
            raise LogError(f"unsupported schema_version {raw['schema_version']}", line_no)
        return EventRecord(
            seq=raw["seq"],
            at=parse_timestamp(raw["at"]),
            type=raw["type"],
            payload=raw["payload"],
        )
    except LogError:
        raise
    except Exception as e:
        raise LogError(f"invalid record: {e}", line_no) from e


class EventLogWriter:
    """Single appender for one log file. Not safe for concurrent writers."""

    def __init__(self, path: str):
        self.path = path
        self._file = open(path, "w", encoding="utf-8", newline="\n")
        self._next_seq = 0
        self._last_at: Optional[datetime] = None

    def append(self, at: datetime, type: str, payload: dict) -> int:
        """Write one record durably and return its assigned seq.

        Timestamps must be non-decreasing; a regression or any
        serialization failure rejects the append with nothing written.
        """
        at = require_utc(at)
        if self._last_at is not None and at < self._last_at:
            raise LogError(
                f"timestamp regression: {format_timestamp(at)} after "
                f"{format_timestamp(self._last_at)}"
            )
        record = EventRecord(seq=self._next_seq, at=at, type=type, payload=payload)
        line = serialize_record(record)  # may raise before any write
        self._file.write(line + "\n")
        self._file.flush()
        os.fsync(self._file.fileno())
        self._next_seq += 1
        self._last_at = at
        return record.seq

    def close(self):
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_all(path: str) -> list[EventRecord]:
    """Parse a full log, enforcing gap-free seqs and monotone timestamps."""
    records: list[EventRecord] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped:
                raise LogError("blank line", line_no)
            record = parse_record(stripped, line_no)
            if record.seq != len(records):
                raise LogError(
                    f"seq {record.seq} breaks the gap-free sequence "
                    f"(expected {len(records)})",
                    line_no,
                )
            if records and record.at < records[-1].at:
                raise LogError("timestamp regression", line_no)
            records.append(record)
    return records
