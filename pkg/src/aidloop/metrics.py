"""Glycemic outcome statistics over CGM readings.

GMI estimates lab A1C from mean CGM glucose with the published linear
regression GMI(%) = 3.31 + 0.02392 x mean(mg/dl) (Bergenstal et al.,
"Glucose Management Indicator", Diabetes Care 2018). Means are
sample-weighted, which matches duration-weighting at the uniform
5-minute CGM cadence used everywhere here.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date
from typing import Optional, Sequence

from aidloop.core import GlucoseReading

GMI_INTERCEPT = 3.31
GMI_SLOPE = 0.02392  # % per mg/dl

TIGHT_RANGE = (70.0, 140.0)
STANDARD_RANGE = (70.0, 180.0)


def gmi_percent(mean_glucose: float) -> float:
    return GMI_INTERCEPT + GMI_SLOPE * mean_glucose


@dataclass(frozen=True)
class SummaryMetrics:
    mean_glucose: float  # mg/dl
    gmi_percent: float  # %
    tir_tight: float  # fraction of samples in [70, 140]
    tir_standard: float  # fraction of samples in [70, 180]
    pct_below_70: float  # fraction of samples < 70
    daily_averages: tuple[tuple[date, float], ...]


def compute(readings: Sequence[GlucoseReading]) -> SummaryMetrics:
    """Summarize a reading sequence; requires at least one sample."""
    if not readings:
        raise ValueError("no readings to summarize")
    values = [r.value for r in readings]
    mean = sum(values) / len(values)

    def fraction(lo: float, hi: float) -> float:
        return sum(1 for v in values if lo <= v <= hi) / len(values)

    by_day: dict[date, list[float]] = {}
    for r in readings:
        by_day.setdefault(r.at.date(), []).append(r.value)
    daily = tuple((d, sum(vs) / len(vs)) for d, vs in sorted(by_day.items()))

    return SummaryMetrics(
        mean_glucose=mean,
        gmi_percent=gmi_percent(mean),
        tir_tight=fraction(*TIGHT_RANGE),
        tir_standard=fraction(*STANDARD_RANGE),
        pct_below_70=sum(1 for v in values if v < 70.0) / len(values),
        daily_averages=daily,
    )


def rolling_daily_averages(
    metrics: SummaryMetrics, window_days: int = 28
) -> list[tuple[date, float, Optional[float]]]:
    """(day, daily mean, rolling mean over up to `window_days` ending there)."""
    rows = []
    days = metrics.daily_averages
    for i, (day, mean) in enumerate(days):
        window = [m for d, m in days[max(0, i - window_days + 1) : i + 1]]
        rows.append((day, mean, sum(window) / len(window)))
    return rows


def write_csv(metrics: SummaryMetrics, path: str, window_days: int = 28):
    """Export daily and rolling averages for offline plotting."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["date", "daily_mean_mg_dl", f"rolling_{window_days}d_mean_mg_dl"])
        for day, mean, rolling in rolling_daily_averages(metrics, window_days):
            writer.writerow([day.isoformat(), f"{mean:.2f}", f"{rolling:.2f}"])
