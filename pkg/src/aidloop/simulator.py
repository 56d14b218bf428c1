"""Virtual patient and scenario harness for exercising the loop end to end.

The plant is deliberately linear, not a physiological ODE: every
expected trajectory stays hand-computable, which is what the contract
tests need. Glucose moves by

  - endogenous production (egp_rate, mg/dl per hour),
  - meal carbs absorbed uniformly over each meal's absorption window,
  - insulin activity, as sensitivity x the insulin activated this tick.

Baseline basal is modeled as already in steady state: its activity
exactly cancels egp when egp_rate = sensitivity x baseline (the
default), so only deviations from baseline are convolved through the
activation curve. With no meals, exact settings, and zero noise the
glucose is constant by construction.

Sensor noise is Gaussian, seeded, and applied to the CGM sample only,
never the plant, so conservation checks stay exact. Runs are
deterministic: the same scenario and seed produce byte-identical logs.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from typing import Optional, Sequence

from aidloop.controller import ControllerState, closed_loop_tick
from aidloop.core import (
    GLUCOSE_MAX_MG_DL,
    GLUCOSE_MIN_MG_DL,
    GlucoseReading,
    InsulinDelivery,
    LoopDecision,
    TherapeuticSettings,
    validate_settings,
)
from aidloop.eventlog import EventLogWriter
from aidloop.insulin import ActivationCurve, iob_fraction, micro_doses
from aidloop.metrics import SummaryMetrics, compute
from aidloop.pump import PumpDisconnected, PumpRejected, PumpState, advance, command_temp_rate, set_connected
from aidloop.watchdog import KIND_LOW, Watchdog

DEFAULT_START = datetime(2024, 1, 1, tzinfo=timezone.utc)

GLUCOSE_FLOOR_MG_DL = 20.0

# Fast-carb rescue profile for auto-treatment on predicted-low alerts:
# glucose tabs, effectively no digestive delay.
TREATMENT_ABSORPTION_MINUTES = 15.0
TREATMENT_DELAY_MINUTES = 0.0


@dataclass(frozen=True)
class Meal:
    at: datetime
    grams: float
    absorption_minutes: float
    delay_minutes: float = 0.0

    def absorbed_between(self, t1: datetime, t2: datetime) -> float:
        """Grams absorbed in [t1, t2) under uniform absorption."""
        begin = self.at + timedelta(minutes=self.delay_minutes)
        end = begin + timedelta(minutes=self.absorption_minutes)
        lo = max(t1, begin)
        hi = min(t2, end)
        overlap = (hi - lo).total_seconds() / 60.0
        if overlap <= 0:
            return 0.0
        return self.grams * overlap / self.absorption_minutes


@dataclass(frozen=True)
class PatientModel:
    """Linear virtual patient; `step` folds one tick of deliveries in."""

    true_glucose: float  # mg/dl
    now: datetime
    sensitivity: float  # mg/dl per U, mirrors the therapy setting
    baseline_rate: float  # U/hr assumed to be in steady state
    curve: ActivationCurve
    carb_factor: float = 3.0  # mg/dl per gram
    egp_rate: Optional[float] = None  # mg/dl per hour; None = sensitivity x baseline
    meals: tuple[Meal, ...] = ()
    doses: tuple[tuple[datetime, float], ...] = ()  # deviation doses already delivered

    @property
    def effective_egp(self) -> float:
        if self.egp_rate is None:
            return self.sensitivity * self.baseline_rate
        return self.egp_rate

    def with_meal(self, meal: Meal) -> "PatientModel":
        return replace(self, meals=self.meals + (meal,))

    def step(self, deliveries: Sequence[InsulinDelivery], minutes: float) -> "PatientModel":
        """Advance the plant by `minutes`, folding in this tick's deliveries."""
        if minutes <= 0:
            raise ValueError("step must advance time")
        t1 = self.now
        t2 = t1 + timedelta(minutes=minutes)

        drift = (self.effective_egp - self.sensitivity * self.baseline_rate) * minutes / 60.0
        carbs = sum(m.absorbed_between(t1, t2) for m in self.meals) * self.carb_factor

        doses = list(self.doses)
        for d in deliveries:
            doses.extend(micro_doses(d, self.baseline_rate))

        activated = 0.0
        for at, units in doses:
            before = iob_fraction(self.curve, (t1 - at).total_seconds() / 60.0)
            after = iob_fraction(self.curve, (t2 - at).total_seconds() / 60.0)
            activated += units * (before - after)
        insulin_drop = self.sensitivity * activated

        glucose = max(GLUCOSE_FLOOR_MG_DL, self.true_glucose + drift + carbs - insulin_drop)

        horizon = timedelta(minutes=self.curve.duration_minutes)
        keep_doses = tuple(d for d in doses if t2 - d[0] < horizon)
        keep_meals = tuple(
            m
            for m in self.meals
            if t2 < m.at + timedelta(minutes=m.delay_minutes + m.absorption_minutes)
        )
        return replace(self, true_glucose=glucose, now=t2, doses=keep_doses, meals=keep_meals)


@dataclass(frozen=True)
class MealSpec:
    at_minutes: float  # offset from scenario start
    grams: float
    absorption_minutes: float
    delay_minutes: float = 0.0


@dataclass(frozen=True)
class PatientConfig:
    initial_glucose: float
    carb_factor: float = 3.0
    egp_rate: Optional[float] = None
    meals: tuple[MealSpec, ...] = ()
    noise_sd: float = 0.0
    noise_seed: int = 0


@dataclass(frozen=True)
class Scenario:
    settings: TherapeuticSettings
    patient: PatientConfig
    duration_hours: float
    curve: ActivationCurve = ActivationCurve()
    start: datetime = DEFAULT_START
    cgm_period_minutes: float = 5.0
    disconnect_windows: tuple[tuple[float, float], ...] = ()  # minutes from start
    loop_enabled: bool = True
    watchdog_enabled: bool = False
    low_treatment_grams: float = 15.0

    def validate(self):
        validate_settings(self.settings)
        if self.duration_hours <= 0:
            raise ValueError("duration_hours must be > 0")
        if self.cgm_period_minutes <= 0:
            raise ValueError("cgm_period_minutes must be > 0")
        if not (GLUCOSE_MIN_MG_DL <= self.patient.initial_glucose <= GLUCOSE_MAX_MG_DL):
            raise ValueError("initial_glucose outside the sensor range")
        for window in self.disconnect_windows:
            if len(window) != 2 or window[0] >= window[1]:
                raise ValueError(f"bad disconnect window {window}")
        for meal in self.patient.meals:
            if meal.grams < 0 or meal.absorption_minutes <= 0 or meal.delay_minutes < 0:
                raise ValueError("bad meal specification")
        if self.low_treatment_grams < 0:
            raise ValueError("low_treatment_grams must be >= 0")


@dataclass(frozen=True)
class RunResult:
    log_path: str
    metrics: SummaryMetrics
    decisions: tuple[LoopDecision, ...]


def settings_payload(settings: TherapeuticSettings) -> dict:
    return {
        "baseline_basal_rate": settings.baseline_basal_rate,
        "insulin_sensitivity": settings.insulin_sensitivity,
        "target_glucose": settings.target_glucose,
        "shutoff_threshold": settings.shutoff_threshold,
        "low_alert_threshold": settings.low_alert_threshold,
        "high_alert_threshold": settings.high_alert_threshold,
        "max_basal_multiplier": settings.max_basal_multiplier,
        "temp_duration": settings.temp_duration,
        "proportional_gain": settings.proportional_gain,
    }


def curve_payload(curve: ActivationCurve) -> dict:
    return {"peak_minutes": curve.peak_minutes, "duration_minutes": curve.duration_minutes}


def loop_payload(decision: LoopDecision) -> dict:
    return {
        "glucose": decision.glucose,
        "net_iob": decision.net_iob,
        "correction_units": decision.correction_units,
        "commanded_rate": decision.commanded_rate,
        "mode": decision.mode,
        "settings": settings_payload(decision.settings_snapshot),
    }


def run_scenario(
    scenario: Scenario, log_path: str, seed_override: Optional[int] = None
) -> RunResult:
    """Run the closed loop against the virtual patient, logging every event.

    Each tick: CGM sample, loop decision, pump command, optional
    watchdog evaluation, pump advance, patient step. Disconnect windows
    drop commands, but the on-pump program keeps delivering.
    """
    scenario.validate()
    settings = scenario.settings
    curve = scenario.curve
    period = scenario.cgm_period_minutes
    start = scenario.start
    seed = scenario.patient.noise_seed if seed_override is None else seed_override
    rng = random.Random(seed)

    pump = PumpState.paired(
        baseline_rate=settings.baseline_basal_rate,
        max_rate=settings.max_basal_rate,
        at=start,
    )
    patient = PatientModel(
        true_glucose=scenario.patient.initial_glucose,
        now=start,
        sensitivity=settings.insulin_sensitivity,
        baseline_rate=settings.baseline_basal_rate,
        curve=curve,
        carb_factor=scenario.patient.carb_factor,
        egp_rate=scenario.patient.egp_rate,
        meals=tuple(
            Meal(
                at=start + timedelta(minutes=m.at_minutes),
                grams=m.grams,
                absorption_minutes=m.absorption_minutes,
                delay_minutes=m.delay_minutes,
            )
            for m in scenario.patient.meals
        ),
    )
    controller_state = ControllerState()
    watchdog = Watchdog()
    window: list[GlucoseReading] = []  # trailing readings for the watchdog
    all_readings: list[GlucoseReading] = []
    decisions: list[LoopDecision] = []

    ticks = int(round(scenario.duration_hours * 60.0 / period))

    def disconnected_at(minutes: float) -> bool:
        return any(lo <= minutes < hi for lo, hi in scenario.disconnect_windows)

    with EventLogWriter(log_path) as log:
        log.append(
            start,
            "settings",
            {"settings": settings_payload(settings), "curve": curve_payload(curve)},
        )
        for k in range(ticks):
            offset = k * period
            t = start + timedelta(minutes=offset)

            value = patient.true_glucose
            if scenario.patient.noise_sd > 0:
                value += rng.gauss(0.0, scenario.patient.noise_sd)
            value = min(GLUCOSE_MAX_MG_DL, max(GLUCOSE_MIN_MG_DL, value))
            reading = GlucoseReading(at=t, value=value)
            log.append(t, "cgm", {"value": reading.value})
            all_readings.append(reading)
            window.append(reading)
            cutoff = t - timedelta(minutes=60)
            window = [r for r in window if r.at > cutoff]

            pump = set_connected(pump, not disconnected_at(offset))

            if scenario.loop_enabled:
                controller_state, decision = closed_loop_tick(
                    controller_state, reading, pump.delivered, settings, curve
                )
                assert decision is not None  # readings are strictly increasing
                decisions.append(decision)
                log.append(t, "loop", loop_payload(decision))

                status = "accepted"
                try:
                    pump = command_temp_rate(
                        pump, decision.commanded_rate, settings.temp_duration, t
                    )
                except PumpDisconnected:
                    status = "lost"
                except PumpRejected:
                    status = "rejected"
                log.append(
                    t,
                    "pump",
                    {
                        "kind": "command",
                        "command": "set_temp_rate",
                        "rate": decision.commanded_rate,
                        "duration": settings.temp_duration,
                        "status": status,
                        "effective_rate": pump.effective_rate(t),
                    },
                )

            if scenario.watchdog_enabled:
                alert = watchdog.evaluate(window, pump.delivered, settings, curve)
                if alert is not None:
                    log.append(
                        t,
                        "alert",
                        {
                            "kind": alert.kind,
                            "predicted_glucose": alert.predicted_glucose,
                            "horizon": alert.horizon,
                        },
                    )
                    if alert.kind == KIND_LOW and scenario.low_treatment_grams > 0:
                        patient = patient.with_meal(
                            Meal(
                                at=t,
                                grams=scenario.low_treatment_grams,
                                absorption_minutes=TREATMENT_ABSORPTION_MINUTES,
                                delay_minutes=TREATMENT_DELAY_MINUTES,
                            )
                        )

            expiring = pump.active_temp
            before = len(pump.delivered)
            pump = advance(pump, t + timedelta(minutes=period))
            if expiring is not None and pump.active_temp is None:
                log.append(expiring.expires, "pump", {
                    "kind": "expiry",
                    "effective_rate": pump.baseline_rate,
                })
            patient = patient.step(pump.delivered[before:], period)

    return RunResult(
        log_path=log_path,
        metrics=compute(all_readings),
        decisions=tuple(decisions),
    )


def scenario_from_dict(raw: dict) -> Scenario:
    """Build a Scenario from the JSON document shape used on disk."""
    try:
        settings = TherapeuticSettings(**raw["settings"])
        curve = ActivationCurve(**raw.get("curve", {}))
        praw = dict(raw["patient"])
        meals = tuple(MealSpec(**m) for m in praw.pop("meals", []))
        patient = PatientConfig(meals=meals, **praw)
        start_text = raw.get("start")
        start = (
            DEFAULT_START
            if start_text is None
            else datetime.strptime(start_text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
        )
        scenario = Scenario(
            settings=settings,
            curve=curve,
            patient=patient,
            duration_hours=raw["duration_hours"],
            start=start,
            cgm_period_minutes=raw.get("cgm_period_minutes", 5.0),
            disconnect_windows=tuple(tuple(w) for w in raw.get("disconnect_windows", [])),
            loop_enabled=raw.get("loop_enabled", True),
            watchdog_enabled=raw.get("watchdog_enabled", False),
            low_treatment_grams=raw.get("low_treatment_grams", 15.0),
        )
    except (KeyError, TypeError) as e:
        raise ValueError(f"bad scenario document: {e}") from e
    scenario.validate()
    return scenario


def scenario_from_file(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        return scenario_from_dict(json.load(f))
