"""Shared domain types: readings, settings, deliveries, loop decisions.

All timestamps are timezone-aware UTC at second precision. Values are
immutable; a settings change is a new snapshot, never an in-place edit.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

GLUCOSE_MIN_MG_DL = 40.0   # CGM reporting floor
GLUCOSE_MAX_MG_DL = 400.0  # CGM reporting ceiling


def require_utc(at: datetime) -> datetime:
    """Reject naive timestamps; normalize to UTC at second precision."""
    if at.tzinfo is None:
        raise ValueError("naive timestamp; all times must be UTC-aware")
    at = at.astimezone(timezone.utc)
    return at.replace(microsecond=0)


@dataclass(frozen=True)
class GlucoseReading:
    """One CGM sample in mg/dl. Out-of-range values are rejected, not clamped.

    Values carry the log's 6-decimal precision, so a decision computed
    from a reading is bit-reproducible from its logged record.
    """

    at: datetime
    value: float  # mg/dl

    def __post_init__(self):
        object.__setattr__(self, "at", require_utc(self.at))
        object.__setattr__(self, "value", round(self.value, 6))
        if not (GLUCOSE_MIN_MG_DL <= self.value <= GLUCOSE_MAX_MG_DL):
            raise ValueError(
                f"glucose {self.value} mg/dl outside sensor range "
                f"[{GLUCOSE_MIN_MG_DL}, {GLUCOSE_MAX_MG_DL}]"
            )


class SettingsError(ValueError):
    """A therapeutic-settings invariant failed; `field` names the first one."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class TherapeuticSettings:
    """The two user settings (baseline rate, sensitivity) plus fixed targets.

    baseline_basal_rate: U/hr the pump delivers with no loop intervention.
    insulin_sensitivity: mg/dl of glucose drop per unit of insulin.
    The remaining fields default to the stock safety configuration:
    target 90, shutoff below 80, alerts at 70/180, max rate 4x baseline,
    30-minute temp commands, proportional gain 0.5.
    """

    baseline_basal_rate: float  # U/hr
    insulin_sensitivity: float  # mg/dl per U
    target_glucose: float = 90.0
    shutoff_threshold: float = 80.0
    low_alert_threshold: float = 70.0
    high_alert_threshold: float = 180.0
    max_basal_multiplier: float = 4.0
    temp_duration: float = 30.0  # minutes
    proportional_gain: float = 0.5  # dimensionless, in (0, 1]

    def __post_init__(self):
        # settings round-trip through the 6-decimal log; keep the values
        # in use identical to the values on record
        for name in (
            "baseline_basal_rate",
            "insulin_sensitivity",
            "target_glucose",
            "shutoff_threshold",
            "low_alert_threshold",
            "high_alert_threshold",
            "max_basal_multiplier",
            "temp_duration",
            "proportional_gain",
        ):
            object.__setattr__(self, name, round(getattr(self, name), 6))

    @property
    def max_basal_rate(self) -> float:
        """Derived cap in U/hr; never stored separately."""
        return self.max_basal_multiplier * self.baseline_basal_rate


def validate_settings(s: TherapeuticSettings) -> None:
    """Raise SettingsError naming the first violated invariant."""
    if not s.baseline_basal_rate > 0:
        raise SettingsError("baseline_basal_rate", "must be > 0")
    if not s.insulin_sensitivity > 0:
        raise SettingsError("insulin_sensitivity", "must be > 0")
    if not s.target_glucose > 0:
        raise SettingsError("target_glucose", "must be > 0")
    if not s.shutoff_threshold > 0:
        raise SettingsError("shutoff_threshold", "must be > 0")
    if not s.low_alert_threshold > 0:
        raise SettingsError("low_alert_threshold", "must be > 0")
    if not s.high_alert_threshold > 0:
        raise SettingsError("high_alert_threshold", "must be > 0")
    if not s.max_basal_multiplier > 0:
        raise SettingsError("max_basal_multiplier", "must be > 0")
    if not s.temp_duration > 0:
        raise SettingsError("temp_duration", "must be > 0")
    if not 0 < s.proportional_gain <= 1:
        raise SettingsError("proportional_gain", "must be in (0, 1]")


@dataclass(frozen=True)
class InsulinDelivery:
    """Insulin actually delivered: an instantaneous bolus or a basal segment.

    Boluses carry `units`; basal segments carry `rate` (U/hr) and
    `duration` (minutes), with units derived as rate * duration / 60.
    """

    start: datetime
    kind: str  # "bolus" | "basal-segment"
    units: float = 0.0
    rate: float = 0.0
    duration: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "start", require_utc(self.start))
        if self.kind == "bolus":
            if self.units < 0:
                raise ValueError("bolus units must be >= 0")
        elif self.kind == "basal-segment":
            if self.rate < 0:
                raise ValueError("segment rate must be >= 0")
            if self.duration <= 0:
                raise ValueError("segment duration must be > 0")
            object.__setattr__(self, "units", self.rate * self.duration / 60.0)
        else:
            raise ValueError(f"unknown delivery kind {self.kind!r}")

    @staticmethod
    def bolus(start: datetime, units: float) -> "InsulinDelivery":
        return InsulinDelivery(start=start, kind="bolus", units=units)

    @staticmethod
    def basal_segment(start: datetime, rate: float, duration: float) -> "InsulinDelivery":
        return InsulinDelivery(start=start, kind="basal-segment", rate=rate, duration=duration)


MODE_NORMAL = "normal"
MODE_SHUTOFF = "shutoff"


@dataclass(frozen=True)
class LoopDecision:
    """One closed-loop tick: the inputs it saw and the rate it commanded."""

    at: datetime
    glucose: float  # mg/dl
    net_iob: float  # U, negative after a suspension
    correction_units: float  # U, negative when insulin is in surplus
    commanded_rate: float  # U/hr, post-quantization
    mode: str  # MODE_NORMAL | MODE_SHUTOFF
    settings_snapshot: TherapeuticSettings

    def __post_init__(self):
        object.__setattr__(self, "at", require_utc(self.at))
        s = self.settings_snapshot
        if not (0 <= self.commanded_rate <= s.max_basal_rate + 1e-9):
            raise ValueError("commanded rate outside [0, max basal rate]")
        in_shutoff = self.glucose < s.shutoff_threshold
        if in_shutoff != (self.mode == MODE_SHUTOFF):
            raise ValueError("mode must be shutoff exactly when glucose < shutoff threshold")
        if self.mode == MODE_SHUTOFF and self.commanded_rate != 0:
            raise ValueError("shutoff decisions must command a zero rate")
