"""Exponential insulin activation curve and net insulin-on-board.

The curve is the standard two-parameter exponential activity model used
across open-source dosing systems: activity rises from zero, peaks at
`peak_minutes`, and tapers to zero at `duration_minutes`. Its integral
over the full duration is normalized to exactly 1, and the on-board
fraction is the complementary integral in closed form.

Net IOB is computed against the baseline basal rate: a bolus counts in
full, a basal segment counts only for its deviation from baseline,
discretized into one-minute micro-doses. Delivery that exactly matches
baseline therefore contributes zero, and a suspension goes negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from functools import cached_property
from typing import Iterable

from aidloop.core import InsulinDelivery

# Micro-dose step for basal-segment IOB, in minutes. Part of the log
# replay contract: verifiers must reproduce it exactly.
MICRO_DOSE_MINUTES = 1.0


@dataclass(frozen=True)
class ActivationCurve:
    """Peak and total duration of insulin activity, in minutes."""

    peak_minutes: float = 65.0
    duration_minutes: float = 360.0

    def __post_init__(self):
        object.__setattr__(self, "peak_minutes", round(self.peak_minutes, 6))
        object.__setattr__(self, "duration_minutes", round(self.duration_minutes, 6))
        tp, td = self.peak_minutes, self.duration_minutes
        if not (0 < tp < td / 2):
            raise ValueError("peak must satisfy 0 < peak < duration/2")

    @cached_property
    def _tau(self) -> float:
        tp, td = self.peak_minutes, self.duration_minutes
        return tp * (1 - tp / td) / (1 - 2 * tp / td)

    @cached_property
    def _scale(self) -> tuple[float, float]:
        """(a, K) normalization pair; K makes the activity integrate to 1."""
        td = self.duration_minutes
        tau = self._tau
        a = 2 * tau / td
        k = 1 / (1 - a + (1 + a) * math.exp(-td / tau))
        return a, k


def activity_density(curve: ActivationCurve, t: float) -> float:
    """Instantaneous activity at `t` minutes after a dose, per minute.

    Zero outside (0, duration); peaks at the curve's peak time; the area
    under the full curve is 1.
    """
    td = curve.duration_minutes
    if t <= 0 or t >= td:
        return 0.0
    tau = curve._tau
    _, k = curve._scale
    return (k / tau**2) * t * (1 - t / td) * math.exp(-t / tau)


def iob_fraction(curve: ActivationCurve, minutes_since_dose: float) -> float:
    """Fraction of a dose still unabsorbed `minutes_since_dose` after delivery.

    1 at t=0, 0 at or beyond the curve duration, continuous and
    non-increasing in between. Closed-form complement of the activity
    integral.
    """
    t = minutes_since_dose
    td = curve.duration_minutes
    if t <= 0:
        return 1.0
    if t >= td:
        return 0.0
    tau = curve._tau
    a, k = curve._scale
    frac = 1 - k * (1 - a) * (
        ((t * t) / (tau * td * (1 - a)) - t / tau - 1) * math.exp(-t / tau) + 1
    )
    # guard rounding residue at the endpoints
    return min(1.0, max(0.0, frac))


def micro_doses(
    delivery: InsulinDelivery, baseline_rate: float
) -> Iterable[tuple[datetime, float]]:
    """Expand a delivery into (time, units) doses relative to baseline.

    A bolus is a single dose of its full size. A basal segment becomes
    one dose per whole-minute slice, each worth
    (rate - baseline) * slice_minutes / 60, attributed at the slice start.
    """
    if delivery.kind == "bolus":
        yield delivery.start, delivery.units
        return
    deviation = delivery.rate - baseline_rate
    if deviation == 0.0:
        return
    remaining = delivery.duration
    offset = 0.0
    while remaining > 1e-12:
        slice_minutes = min(MICRO_DOSE_MINUTES, remaining)
        at = delivery.start + timedelta(minutes=offset)
        yield at, deviation * slice_minutes / 60.0
        offset += slice_minutes
        remaining -= slice_minutes


def net_iob(
    history: Iterable[InsulinDelivery],
    baseline_rate: float,
    curve: ActivationCurve,
    now: datetime,
) -> float:
    """Units of insulin on board relative to baseline delivery at `now`.

    Boluses decay along the curve in full; basal segments contribute via
    their micro-dosed deviation from baseline, so the result is negative
    after a suspension. Deliveries older than the curve duration drop out.
    """
    td = curve.duration_minutes
    total = 0.0
    for delivery in history:
        age = (now - delivery.start).total_seconds() / 60.0
        if age - delivery.duration >= td:
            continue  # fully absorbed, including the segment's last slice
        for at, units in micro_doses(delivery, baseline_rate):
            dt = (now - at).total_seconds() / 60.0
            if dt < 0:
                continue  # not yet delivered
            total += units * iob_fraction(curve, dt)
    return total
