"""Glycemic-imbalance watchdog: predict 15 minutes ahead, nudge early.

Fits an ordinary least-squares line through the last half hour of CGM
readings and evaluates it at the prediction horizon. A predicted dip
below the low threshold raises a low alert; a predicted rise above the
high threshold raises a high alert only after crediting the glucose
drop the on-board insulin will already deliver, which is what keeps
"high but already dosed" situations from paging anyone.

The watchdog consumes the same data streams the log records; it never
touches controller state.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Optional, Sequence

from aidloop.core import GlucoseReading, InsulinDelivery, TherapeuticSettings
from aidloop.insulin import ActivationCurve, net_iob

PREDICTION_HORIZON_MINUTES = 15.0
REGRESSION_WINDOW_MINUTES = 30.0
MIN_POINTS = 3
ALERT_COOLDOWN_MINUTES = 30.0

KIND_LOW = "predicted-low"
KIND_HIGH = "predicted-high"


@dataclass(frozen=True)
class Alert:
    at: datetime
    kind: str  # KIND_LOW | KIND_HIGH
    predicted_glucose: float  # mg/dl at the horizon
    horizon: float = PREDICTION_HORIZON_MINUTES


def predict_glucose(
    readings: Sequence[GlucoseReading],
    horizon: float = PREDICTION_HORIZON_MINUTES,
) -> Optional[float]:
    """Least-squares extrapolation `horizon` minutes past the latest reading.

    Uses readings from the trailing regression window only; returns None
    when fewer than three are available (callers skip the cycle).
    """
    if not readings:
        return None
    latest = readings[-1].at
    cutoff = latest - timedelta(minutes=REGRESSION_WINDOW_MINUTES)
    window = [r for r in readings if r.at > cutoff]
    if len(window) < MIN_POINTS:
        return None
    # minutes relative to the latest reading, so the horizon is just +horizon
    xs = [(r.at - latest).total_seconds() / 60.0 for r in window]
    ys = [r.value for r in window]
    slope, intercept = statistics.linear_regression(xs, ys)
    return intercept + slope * horizon


class Watchdog:
    """Per-stream evaluator with alert dedup bookkeeping.

    An alert of a given kind is suppressed for 30 minutes unless the
    condition cleared on an intervening evaluation, in which case the
    next trigger is a fresh episode and fires immediately.
    """

    def __init__(self):
        self._last_fired: dict[str, datetime] = {}
        self._cleared: dict[str, bool] = {KIND_LOW: True, KIND_HIGH: True}

    def _may_fire(self, kind: str, now: datetime) -> bool:
        if self._cleared[kind]:
            return True
        last = self._last_fired.get(kind)
        return last is None or (now - last) >= timedelta(minutes=ALERT_COOLDOWN_MINUTES)

    def _note(self, kind: str, triggered: bool, fired: bool, now: datetime):
        if fired:
            self._last_fired[kind] = now
            self._cleared[kind] = False
        elif not triggered:
            self._cleared[kind] = True

    def evaluate(
        self,
        readings: Sequence[GlucoseReading],
        history: Sequence[InsulinDelivery],
        settings: TherapeuticSettings,
        curve: ActivationCurve,
    ) -> Optional[Alert]:
        """Evaluate the latest reading; return at most one alert.

        Low wins over high when both would fire. High alerts subtract
        max(net_iob, 0) * sensitivity from the prediction: insulin on
        board is credited in full, but an insulin deficit is never
        allowed to mask a high.
        """
        prediction = predict_glucose(readings)
        if prediction is None:
            return None
        now = readings[-1].at

        low = prediction < settings.low_alert_threshold
        iob = net_iob(history, settings.baseline_basal_rate, curve, now)
        adjusted = prediction - max(iob, 0.0) * settings.insulin_sensitivity
        high = adjusted > settings.high_alert_threshold

        fire_low = low and self._may_fire(KIND_LOW, now)
        fire_high = (not low) and high and self._may_fire(KIND_HIGH, now)
        self._note(KIND_LOW, low, fire_low, now)
        self._note(KIND_HIGH, high, fire_high, now)

        if fire_low:
            return Alert(at=now, kind=KIND_LOW, predicted_glucose=prediction)
        if fire_high:
            return Alert(at=now, kind=KIND_HIGH, predicted_glucose=prediction)
        return None
