"""Closed-loop insulin delivery core.

Building blocks for an automated insulin delivery loop: domain types,
insulin-on-board kinetics, a virtual pump, the proportional dosing
controller, a glycemic-imbalance watchdog, an append-only event log,
outcome metrics, and a virtual-patient scenario simulator.
"""

from aidloop.core import (
    GlucoseReading,
    InsulinDelivery,
    LoopDecision,
    SettingsError,
    TherapeuticSettings,
    validate_settings,
)
from aidloop.insulin import ActivationCurve, activity_density, iob_fraction, net_iob

__all__ = [
    "ActivationCurve",
    "GlucoseReading",
    "InsulinDelivery",
    "LoopDecision",
    "SettingsError",
    "TherapeuticSettings",
    "activity_density",
    "iob_fraction",
    "net_iob",
    "validate_settings",
]
