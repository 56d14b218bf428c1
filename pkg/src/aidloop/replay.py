"""Primary-side log inspection: sanity rules and offline re-evaluation.

This is the cheap, always-available half of log verification: per-record
sanity rules plus an internal-consistency recompute of each loop
decision from the inputs stored in that same record. The heavyweight
cross-check, re-deriving IOB from the raw pump history with an
independent implementation, lives in the out-of-tree verifier and
deliberately shares no code with this package.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Optional

from aidloop.controller import commanded_rate_for
from aidloop.core import (
    GLUCOSE_MAX_MG_DL,
    GLUCOSE_MIN_MG_DL,
    MODE_SHUTOFF,
    GlucoseReading,
    InsulinDelivery,
    TherapeuticSettings,
)
from aidloop.eventlog import EventRecord
from aidloop.insulin import ActivationCurve

RULE_SEQ_GAP = "seq-gap"
RULE_TIMESTAMP = "timestamp-regression"
RULE_CGM_RANGE = "cgm-range"
RULE_MAX_RATE = "max-rate"
RULE_SHUTOFF = "shutoff"
RULE_MODE = "mode-consistency"
RULE_RATE_RECOMPUTE = "rate-consistency"


@dataclass(frozen=True)
class SanityFailure:
    seq: int
    rule: str
    detail: str


def _settings_from_payload(raw: dict) -> TherapeuticSettings:
    return TherapeuticSettings(**raw)


def sanity_check(records: list[EventRecord]) -> list[SanityFailure]:
    """Run every per-record rule over an already-parsed log.

    Structural rules (seq gaps, timestamp regressions) are normally
    caught at parse time; they are re-checked here so pre-parsed record
    lists from other sources get the same scrutiny.
    """
    failures: list[SanityFailure] = []
    last_at = None
    for i, record in enumerate(records):
        if record.seq != i:
            failures.append(
                SanityFailure(record.seq, RULE_SEQ_GAP, f"expected seq {i}, found {record.seq}")
            )
        if last_at is not None and record.at < last_at:
            failures.append(
                SanityFailure(record.seq, RULE_TIMESTAMP, "timestamp earlier than predecessor")
            )
        last_at = record.at

        if record.type == "cgm":
            value = record.payload.get("value")
            if not (GLUCOSE_MIN_MG_DL <= value <= GLUCOSE_MAX_MG_DL):
                failures.append(
                    SanityFailure(record.seq, RULE_CGM_RANGE, f"{value} mg/dl out of range")
                )
        elif record.type == "loop":
            failures.extend(_check_loop_record(record))
    return failures


def _check_loop_record(record: EventRecord) -> list[SanityFailure]:
    failures = []
    p = record.payload
    settings = _settings_from_payload(p["settings"])
    rate = p["commanded_rate"]
    glucose = p["glucose"]
    mode = p["mode"]

    if not (0 <= rate <= settings.max_basal_rate + 1e-9):
        failures.append(
            SanityFailure(
                record.seq,
                RULE_MAX_RATE,
                f"rate {rate} outside [0, {settings.max_basal_rate}]",
            )
        )
    below = glucose < settings.shutoff_threshold
    if below and rate != 0:
        failures.append(
            SanityFailure(
                record.seq, RULE_SHUTOFF, f"glucose {glucose} below shutoff but rate {rate}"
            )
        )
    if below != (mode == MODE_SHUTOFF):
        failures.append(
            SanityFailure(record.seq, RULE_MODE, f"mode {mode!r} inconsistent with glucose {glucose}")
        )

    expected, _ = commanded_rate_for(glucose, p["net_iob"], settings)
    if abs(expected - rate) > 1e-6:
        failures.append(
            SanityFailure(
                record.seq,
                RULE_RATE_RECOMPUTE,
                f"logged rate {rate}, recomputed {expected} from recorded inputs",
            )
        )
    return failures


@dataclass
class ReplayedStream:
    """Inputs reconstructed from a log for offline re-evaluation."""

    settings: Optional[TherapeuticSettings]
    curve: Optional[ActivationCurve]
    readings: list[GlucoseReading]
    temp_commands: list[tuple[datetime, float, float]]  # (at, rate, duration minutes)


def reconstruct(records: list[EventRecord]) -> ReplayedStream:
    settings = None
    curve = None
    readings: list[GlucoseReading] = []
    temps: list[tuple[datetime, float, float]] = []
    for record in records:
        if record.type == "settings":
            settings = _settings_from_payload(record.payload["settings"])
            curve = ActivationCurve(**record.payload["curve"])
        elif record.type == "cgm":
            readings.append(GlucoseReading(at=record.at, value=record.payload["value"]))
        elif record.type == "pump":
            p = record.payload
            if p.get("kind") == "command" and p.get("command") == "set_temp_rate":
                if p.get("status") == "accepted":
                    temps.append((record.at, p["rate"], p["duration"]))
    return ReplayedStream(settings=settings, curve=curve, readings=readings, temp_commands=temps)


def delivery_history(
    stream: ReplayedStream, upto: datetime
) -> list[InsulinDelivery]:
    """Basal segments up to `upto` implied by the accepted temp commands.

    Mirrors the pump's replace-on-command, expire-to-baseline semantics.
    Used by the offline watchdog; boluses are not part of scenario logs.
    """
    assert stream.settings is not None
    baseline = stream.settings.baseline_basal_rate
    segments: list[InsulinDelivery] = []
    cursor: Optional[datetime] = None
    temps = [t for t in stream.temp_commands if t[0] < upto]

    def emit(start: datetime, end: datetime, rate: float):
        minutes = (end - start).total_seconds() / 60.0
        if minutes > 0:
            segments.append(InsulinDelivery.basal_segment(start, rate, minutes))

    for i, (at, rate, duration) in enumerate(temps):
        if cursor is None:
            cursor = at
        elif at > cursor:
            emit(cursor, at, baseline)  # gap after an expiry runs at baseline
            cursor = at
        expires = at + timedelta(minutes=duration)
        next_at = temps[i + 1][0] if i + 1 < len(temps) else upto
        end = min(expires, next_at, upto)
        emit(cursor, end, rate)
        cursor = end
    if cursor is not None and cursor < upto:
        emit(cursor, upto, baseline)
    return segments
