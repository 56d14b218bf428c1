/**
 * Single-pass replay verification of a closed-loop event log.
 *
 * For every loop record: rebuild the insulin history from strictly
 * earlier pump records, recompute net IOB (micro-dose + quadrature,
 * see insulin.ts) and the commanded rate (dosing rule from the format
 * document), and compare against what was logged. On top of that, a
 * set of blunt sanity rules that should never fire on a healthy log.
 */

import { IobTable, netIob } from "./insulin";
import { asNumber, parseLog } from "./parse";
import {
  ActivationCurve,
  BolusDose,
  LogRecord,
  LoopPayload,
  Mismatch,
  SanityFailure,
  TempCommand,
  TherapySettings,
  VerificationReport,
} from "./types";

const RATE_TOLERANCE = 1e-6; // U/hr, absorbs the 6-decimal round trip
const IOB_TOLERANCE = 1e-6; // U
const RATE_RESOLUTION = 0.05; // U/hr pump grid

export function quantizeRate(rate: number): number {
  const steps = Math.floor((rate + 1e-9) / RATE_RESOLUTION);
  return Math.round(steps * RATE_RESOLUTION * 1e6) / 1e6;
}

export function rawRate(glucose: number, iob: number, s: TherapySettings): number {
  const errorUnits = (glucose - s.target_glucose) / s.insulin_sensitivity;
  const correction = errorUnits - iob;
  return s.baseline_basal_rate + correction * s.proportional_gain * (60 / s.temp_duration);
}

function clampRate(raw: number, s: TherapySettings): number {
  return Math.min(Math.max(raw, 0), s.max_basal_multiplier * s.baseline_basal_rate);
}

/**
 * The dosing rule from the format document. Every quantity a decision
 * consumed is logged at full working precision (the producer rounds
 * its inputs to the log's 6 decimals *before* dosing), so recomputing
 * from the record's own fields reproduces the commanded rate exactly.
 */
export function commandedRate(glucose: number, iob: number, s: TherapySettings): number {
  if (glucose < s.shutoff_threshold) return 0;
  return quantizeRate(clampRate(rawRate(glucose, iob, s), s));
}

const SETTINGS_FIELDS: (keyof TherapySettings)[] = [
  "baseline_basal_rate",
  "insulin_sensitivity",
  "target_glucose",
  "shutoff_threshold",
  "low_alert_threshold",
  "high_alert_threshold",
  "max_basal_multiplier",
  "temp_duration",
  "proportional_gain",
];

function readSettings(raw: unknown): TherapySettings | null {
  if (typeof raw !== "object" || raw === null) return null;
  const source = raw as Record<string, unknown>;
  const out: Partial<Record<keyof TherapySettings, number>> = {};
  for (const field of SETTINGS_FIELDS) {
    const value = asNumber(source[field]);
    if (value === null) return null;
    out[field] = value;
  }
  return out as TherapySettings;
}

function readCurve(raw: unknown): ActivationCurve | null {
  if (typeof raw !== "object" || raw === null) return null;
  const source = raw as Record<string, unknown>;
  const peak = asNumber(source.peak_minutes);
  const duration = asNumber(source.duration_minutes);
  if (peak === null || duration === null) return null;
  if (!(peak > 0 && peak < duration / 2)) return null;
  return { peak_minutes: peak, duration_minutes: duration };
}

export function verifyRecords(records: LogRecord[], failures: SanityFailure[]): VerificationReport {
  const mismatches: Mismatch[] = [];
  const sanity = [...failures];

  let table: IobTable | null = null;
  let baseline: number | null = null;
  const temps: TempCommand[] = [];
  const boluses: BolusDose[] = [];
  let loopChecked = 0;

  for (const record of records) {
    switch (record.type) {
      case "settings": {
        const settings = readSettings(record.payload.settings);
        const curve = readCurve(record.payload.curve);
        if (settings === null || curve === null) {
          sanity.push({
            seq: record.seq,
            rule: "bad-settings-record",
            detail: "settings record is missing fields or has an invalid curve",
          });
          break;
        }
        baseline = settings.baseline_basal_rate;
        table = new IobTable(curve);
        break;
      }
      case "cgm": {
        const value = asNumber(record.payload.value);
        if (value === null || value < 40 || value > 400) {
          sanity.push({
            seq: record.seq,
            rule: "cgm-range",
            detail: `cgm value ${record.payload.value} outside [40, 400]`,
          });
        }
        break;
      }
      case "pump": {
        if (record.payload.kind !== "command" || record.payload.status !== "accepted") break;
        if (record.payload.command === "set_temp_rate") {
          const rate = asNumber(record.payload.rate);
          const duration = asNumber(record.payload.duration);
          if (rate === null || duration === null || duration <= 0) {
            sanity.push({
              seq: record.seq,
              rule: "bad-pump-record",
              detail: "accepted temp command without a usable rate/duration",
            });
            break;
          }
          temps.push({ at: record.at, rate, durationMinutes: duration });
        } else if (record.payload.command === "bolus") {
          const units = asNumber(record.payload.units);
          if (units === null || units <= 0) {
            sanity.push({
              seq: record.seq,
              rule: "bad-pump-record",
              detail: "accepted bolus without positive units",
            });
            break;
          }
          boluses.push({ at: record.at, units });
        }
        break;
      }
      case "loop": {
        const outcome = checkLoopRecord(record, table, baseline, temps, boluses);
        sanity.push(...outcome.sanity);
        mismatches.push(...outcome.mismatches);
        loopChecked += 1;
        break;
      }
      case "alert":
        break; // advisory; controller decisions are the safety surface
    }
  }

  return {
    recordsChecked: records.length,
    loopRecordsChecked: loopChecked,
    mismatches,
    sanityFailures: sanity,
  };
}

function checkLoopRecord(
  record: LogRecord,
  table: IobTable | null,
  baseline: number | null,
  temps: TempCommand[],
  boluses: BolusDose[],
): { sanity: SanityFailure[]; mismatches: Mismatch[] } {
  const sanity: SanityFailure[] = [];
  const mismatches: Mismatch[] = [];
  const p = record.payload as Partial<LoopPayload>;
  const settings = readSettings(p.settings);
  const glucose = asNumber(p.glucose);
  const loggedIob = asNumber(p.net_iob);
  const loggedRate = asNumber(p.commanded_rate);
  const mode = p.mode;

  if (settings === null || glucose === null || loggedIob === null || loggedRate === null) {
    sanity.push({
      seq: record.seq,
      rule: "bad-loop-record",
      detail: "loop record is missing required fields",
    });
    return { sanity, mismatches };
  }

  const maxRate = settings.max_basal_multiplier * settings.baseline_basal_rate;
  if (loggedRate < 0 || loggedRate > maxRate + 1e-9) {
    sanity.push({
      seq: record.seq,
      rule: "max-rate",
      detail: `rate ${loggedRate} outside [0, ${maxRate}]`,
    });
  }
  const belowShutoff = glucose < settings.shutoff_threshold;
  if (belowShutoff && loggedRate !== 0) {
    sanity.push({
      seq: record.seq,
      rule: "shutoff",
      detail: `glucose ${glucose} below ${settings.shutoff_threshold} but rate is ${loggedRate}`,
    });
  }
  if (belowShutoff !== (mode === "shutoff")) {
    sanity.push({
      seq: record.seq,
      rule: "mode-consistency",
      detail: `mode ${String(mode)} inconsistent with glucose ${glucose}`,
    });
  }

  if (table === null || baseline === null) {
    sanity.push({
      seq: record.seq,
      rule: "missing-settings",
      detail: "loop record appears before any settings record",
    });
    return { sanity, mismatches };
  }

  const recomputedIob = netIob(temps, boluses, baseline, table, record.at);
  if (Math.abs(recomputedIob - loggedIob) > IOB_TOLERANCE) {
    mismatches.push({
      seq: record.seq,
      field: "net_iob",
      logged: loggedIob,
      recomputed: recomputedIob,
    });
  }

  // the rate is recomputed from the record's own logged inputs (which
  // the producer is required to have dosed from); an IOB discrepancy
  // surfaces once, as the independent net_iob mismatch above
  const recomputedRate = commandedRate(glucose, loggedIob, settings);
  if (Math.abs(recomputedRate - loggedRate) > RATE_TOLERANCE) {
    mismatches.push({
      seq: record.seq,
      field: "commanded_rate",
      logged: loggedRate,
      recomputed: recomputedRate,
    });
  }
  return { sanity, mismatches };
}

export function verifyLogText(text: string): VerificationReport {
  const { records, failures } = parseLog(text);
  return verifyRecords(records, failures);
}
