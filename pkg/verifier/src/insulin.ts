/**
 * Insulin-on-board math, re-derived rather than ported.
 *
 * The producer integrates its activation curve in closed form; here the
 * on-board fraction is tabulated by trapezoid quadrature over the
 * documented activity density (0.01-minute steps, well under the 1e-6
 * tolerance the format document grants), and net IOB is rebuilt with
 * the one-minute micro-dose rule from raw pump history. Same contract,
 * different method: a real cross-check.
 */

import { ActivationCurve, BolusDose, TempCommand } from "./types";

const QUADRATURE_STEP_MINUTES = 0.01;

export class IobTable {
  private readonly stepsPerMinute: number;
  private readonly remaining: Float64Array;
  readonly durationMinutes: number;

  constructor(curve: ActivationCurve) {
    const tp = curve.peak_minutes;
    const td = curve.duration_minutes;
    this.durationMinutes = td;
    const tau = (tp * (1 - tp / td)) / (1 - (2 * tp) / td);
    const a = (2 * tau) / td;
    const k = 1 / (1 - a + (1 + a) * Math.exp(-td / tau));
    const activity = (u: number) =>
      u <= 0 || u >= td ? 0 : ((k / (tau * tau)) * u * (1 - u / td)) * Math.exp(-u / tau);

    const h = QUADRATURE_STEP_MINUTES;
    const n = Math.round(td / h);
    this.stepsPerMinute = Math.round(1 / h);
    this.remaining = new Float64Array(n + 1);
    let cumulative = 0;
    let previous = activity(0);
    this.remaining[0] = 1;
    for (let i = 1; i <= n; i++) {
      const current = activity(i * h);
      cumulative += 0.5 * (previous + current) * h;
      previous = current;
      this.remaining[i] = 1 - cumulative;
    }
  }

  /** Fraction of a dose still on board `minutes` after delivery. */
  fraction(minutes: number): number {
    if (minutes <= 0) return 1;
    if (minutes >= this.durationMinutes) return 0;
    const position = minutes * this.stepsPerMinute;
    const lower = Math.floor(position);
    const t = position - lower;
    const value =
      t === 0
        ? this.remaining[lower]
        : this.remaining[lower] * (1 - t) + this.remaining[lower + 1] * t;
    return Math.min(1, Math.max(0, value));
  }
}

/** One delivery stretch at a constant rate, already clipped. */
export interface RateStretch {
  startSeconds: number;
  minutes: number;
  rate: number;
}

/**
 * Turn accepted temp commands into disjoint delivery stretches up to
 * `untilSeconds`, applying cancel-and-set and expiry-to-baseline.
 * Baseline stretches are omitted: they carry zero deviation.
 */
export function rateStretches(
  temps: TempCommand[],
  baselineRate: number,
  untilSeconds: number,
): RateStretch[] {
  const stretches: RateStretch[] = [];
  for (let i = 0; i < temps.length; i++) {
    const temp = temps[i];
    if (temp.at >= untilSeconds) break;
    let end = temp.at + temp.durationMinutes * 60;
    if (i + 1 < temps.length) end = Math.min(end, temps[i + 1].at);
    end = Math.min(end, untilSeconds);
    const minutes = (end - temp.at) / 60;
    if (minutes > 0 && temp.rate !== baselineRate) {
      stretches.push({ startSeconds: temp.at, minutes, rate: temp.rate });
    }
  }
  return stretches;
}

/**
 * Net insulin on board at `atSeconds`, in units relative to baseline.
 *
 * Boluses decay in full. Each stretch contributes one micro-dose per
 * whole minute: slice k covers [k, min(k+1, length)) minutes from the
 * stretch start, carries (rate - baseline) * slice/60 units, and is
 * attributed at the slice start.
 */
export function netIob(
  temps: TempCommand[],
  boluses: BolusDose[],
  baselineRate: number,
  table: IobTable,
  atSeconds: number,
): number {
  const horizonSeconds = table.durationMinutes * 60;
  let total = 0;

  for (const bolus of boluses) {
    const age = (atSeconds - bolus.at) / 60;
    if (age >= 0) total += bolus.units * table.fraction(age);
  }

  for (const stretch of rateStretches(temps, baselineRate, atSeconds)) {
    if (atSeconds - stretch.startSeconds - stretch.minutes * 60 >= horizonSeconds) continue;
    const deviation = stretch.rate - baselineRate;
    let offset = 0;
    while (offset < stretch.minutes) {
      const slice = Math.min(1, stretch.minutes - offset);
      const doseAt = stretch.startSeconds + offset * 60;
      const age = (atSeconds - doseAt) / 60;
      if (age >= 0) total += ((deviation * slice) / 60) * table.fraction(age);
      offset += slice;
    }
  }
  return total;
}
