"""Virtual insulin pump with temp-rate command semantics.

Models the command surface an on-body pump exposes: immediate boluses,
a programmed baseline rate, and temporary rate overrides that expire
back to baseline on their own. The pump is the second, independent
enforcement layer for the maximum rate: over-max commands are rejected
outright rather than clamped.

The pump is a pure state machine. Commands and `advance` return a new
state; `delivered` is the ground-truth record of insulin that actually
went in, materialized lazily as time advances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from typing import Optional

from aidloop.core import InsulinDelivery, require_utc

# Omnipod-class rate resolution in U/hr. Commands quantize toward zero.
RATE_RESOLUTION = 0.05


def quantize_rate(rate: float) -> float:
    """Snap a rate onto the pump's delivery grid, rounding toward zero.

    The 1e-9 nudge keeps rates that are already on the grid (up to float
    noise) from dropping a full step. Result is normalized to 6 decimals
    so equal commands serialize identically.
    """
    if rate < 0:
        raise ValueError("rate must be >= 0")
    steps = math.floor((rate + 1e-9) / RATE_RESOLUTION)
    return round(steps * RATE_RESOLUTION, 6)


class PumpRejected(Exception):
    """The pump hardware refused the command (over max, negative, ...)."""


class PumpDisconnected(Exception):
    """The command was lost: no link to the pump. State is unchanged."""


@dataclass(frozen=True)
class TempRate:
    rate: float  # U/hr
    started: datetime
    duration: float  # minutes

    @property
    def expires(self) -> datetime:
        return self.started + timedelta(minutes=self.duration)

    def active_at(self, at: datetime) -> bool:
        return self.started <= at < self.expires


@dataclass(frozen=True)
class PumpState:
    baseline_rate: float  # U/hr, programmed at pairing
    max_rate: float  # U/hr, programmed at pairing
    active_temp: Optional[TempRate]
    connected: bool
    delivered: tuple[InsulinDelivery, ...]
    advanced_to: datetime

    @staticmethod
    def paired(baseline_rate: float, max_rate: float, at: datetime) -> "PumpState":
        if baseline_rate < 0 or max_rate <= 0:
            raise ValueError("pairing requires baseline >= 0 and max rate > 0")
        return PumpState(
            baseline_rate=baseline_rate,
            max_rate=max_rate,
            active_temp=None,
            connected=True,
            delivered=(),
            advanced_to=require_utc(at),
        )

    def effective_rate(self, at: datetime) -> float:
        if self.active_temp is not None and self.active_temp.active_at(at):
            return self.active_temp.rate
        return self.baseline_rate


def command_bolus(p: PumpState, units: float, at: datetime) -> PumpState:
    """Deliver `units` immediately. Lost if disconnected; 0 U is an error."""
    at = require_utc(at)
    if units <= 0:
        raise ValueError("bolus units must be > 0")
    if not p.connected:
        raise PumpDisconnected("bolus command lost")
    p = advance(p, at)
    return replace(p, delivered=p.delivered + (InsulinDelivery.bolus(at, units),))


def command_temp_rate(p: PumpState, rate: float, duration: float, at: datetime) -> PumpState:
    """Override the baseline with `rate` for `duration` minutes from `at`.

    Replaces any active temp (cancel-and-set). The rate is quantized to
    the pump grid before storage; quantized rates above the programmed
    max, or negative rates, are rejected. Re-issuing the same command is
    idempotent for delivered insulin: it is just a rate.
    """
    at = require_utc(at)
    if duration <= 0:
        raise ValueError("temp duration must be > 0")
    if not p.connected:
        raise PumpDisconnected("temp rate command lost")
    if rate < 0:
        raise PumpRejected(f"rate {rate} U/hr is negative")
    q = quantize_rate(rate)
    if q > p.max_rate + 1e-9:
        raise PumpRejected(f"rate {q} U/hr exceeds pump max {p.max_rate} U/hr")
    p = advance(p, at)
    return replace(p, active_temp=TempRate(rate=q, started=at, duration=duration))


def set_connected(p: PumpState, connected: bool) -> PumpState:
    """Toggle the link. The on-pump program is unaffected either way."""
    return replace(p, connected=connected)


def advance(p: PumpState, to: datetime) -> PumpState:
    """Materialize basal delivery records up to `to`.

    Splits segments at the active temp's expiry so each record has one
    rate, and clears temps that have expired. Runs regardless of link
    state: the pump executes its program whether or not the phone is
    reachable.
    """
    to = require_utc(to)
    if to < p.advanced_to:
        raise ValueError("cannot advance the pump backwards")
    if to == p.advanced_to:
        return p

    segments: list[InsulinDelivery] = []
    cursor = p.advanced_to
    temp = p.active_temp

    def emit(start: datetime, end: datetime, rate: float):
        minutes = (end - start).total_seconds() / 60.0
        if minutes > 0:
            segments.append(InsulinDelivery.basal_segment(start, rate, minutes))

    if temp is not None:
        if temp.expires <= cursor:
            # expired before this window; nothing of it remains
            temp = None
        elif temp.started >= to:
            # scheduled in the future relative to this advance; baseline now
            emit(cursor, to, p.baseline_rate)
            return replace(p, delivered=p.delivered + tuple(segments), advanced_to=to)

    if temp is None:
        emit(cursor, to, p.baseline_rate)
        return replace(p, active_temp=None, delivered=p.delivered + tuple(segments), advanced_to=to)

    start_of_temp = max(temp.started, cursor)
    emit(cursor, start_of_temp, p.baseline_rate)
    if temp.expires <= to:
        emit(start_of_temp, temp.expires, temp.rate)
        emit(temp.expires, to, p.baseline_rate)
        temp = None
    else:
        emit(start_of_temp, to, temp.rate)
    return replace(p, active_temp=temp, delivered=p.delivered + tuple(segments), advanced_to=to)
