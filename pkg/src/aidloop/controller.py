"""Proportional closed-loop dosing, run once per CGM reading.

Every tick turns the glucose error into a correction in units, nets out
the insulin already on board, and commands a temporary basal rate for
the next window. Below the shutoff threshold delivery stops entirely.
A temp command is issued on every tick, never "no command": if the loop
dies, the pump's own expiry-to-baseline is the fallback.

There is no anti-windup state. While delivery is suspended the net IOB
drifts negative on its own, so the first correction after resume is
automatically larger; the transition needs no special casing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from aidloop.core import (
    MODE_NORMAL,
    MODE_SHUTOFF,
    GlucoseReading,
    InsulinDelivery,
    LoopDecision,
    TherapeuticSettings,
    validate_settings,
)
from aidloop.insulin import ActivationCurve, net_iob
from aidloop.pump import quantize_rate


def commanded_rate_for(
    glucose: float, iob: float, settings: TherapeuticSettings
) -> tuple[float, str]:
    """Pure dosing rule: (commanded U/hr, mode) for one tick.

    Normal mode delivers the baseline plus a proportional share of the
    correction over one temp window:

        error_units     = (glucose - target) / sensitivity
        correction      = error_units - net_iob
        raw_rate        = baseline + correction * gain * (60 / temp_duration)
        commanded_rate  = quantize(clamp(raw_rate, 0, multiplier * baseline))

    Below the shutoff threshold the rate is 0 regardless of IOB.
    """
    if glucose < settings.shutoff_threshold:
        return 0.0, MODE_SHUTOFF
    error_units = (glucose - settings.target_glucose) / settings.insulin_sensitivity
    correction_units = error_units - iob
    raw = settings.baseline_basal_rate + correction_units * settings.proportional_gain * (
        60.0 / settings.temp_duration
    )
    clamped = min(max(raw, 0.0), settings.max_basal_rate)
    return quantize_rate(clamped), MODE_NORMAL


def correction_for(glucose: float, iob: float, settings: TherapeuticSettings) -> float:
    """Correction in units before gain and clamping; negative in surplus."""
    return (glucose - settings.target_glucose) / settings.insulin_sensitivity - iob


@dataclass(frozen=True)
class ControllerState:
    mode: str = MODE_NORMAL
    last_decision: Optional[LoopDecision] = None


def closed_loop_tick(
    state: ControllerState,
    reading: GlucoseReading,
    history: Sequence[InsulinDelivery],
    settings: TherapeuticSettings,
    curve: ActivationCurve,
) -> tuple[ControllerState, Optional[LoopDecision]]:
    """Process one CGM reading into a dosing decision.

    Returns the new state and the decision, or (state, None) when the
    reading is not newer than the last one processed. Invalid settings
    are refused before any dosing math runs.
    """
    validate_settings(settings)
    if state.last_decision is not None and reading.at <= state.last_decision.at:
        return state, None

    # round to the log's precision before dosing: the decision must be
    # bit-reproducible from its own record by out-of-process verifiers
    iob = round(net_iob(history, settings.baseline_basal_rate, curve, reading.at), 6)
    rate, mode = commanded_rate_for(reading.value, iob, settings)
    decision = LoopDecision(
        at=reading.at,
        glucose=reading.value,
        net_iob=iob,
        correction_units=correction_for(reading.value, iob, settings),
        commanded_rate=rate,
        mode=mode,
        settings_snapshot=settings,
    )
    return ControllerState(mode=mode, last_decision=decision), decision
