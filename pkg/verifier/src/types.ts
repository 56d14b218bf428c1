/**
 * Record shapes for event logs, as pinned by docs/log-format.md.
 *
 * This verifier deliberately shares no code with the producer; these
 * types are transcribed from the format document, not imported.
 */

export interface TherapySettings {
  baseline_basal_rate: number;
  insulin_sensitivity: number;
  target_glucose: number;
  shutoff_threshold: number;
  low_alert_threshold: number;
  high_alert_threshold: number;
  max_basal_multiplier: number;
  temp_duration: number;
  proportional_gain: number;
}

export interface ActivationCurve {
  peak_minutes: number;
  duration_minutes: number;
}

export interface LogRecord {
  seq: number;
  /** epoch seconds, UTC */
  at: number;
  type: "cgm" | "loop" | "pump" | "alert" | "settings";
  payload: Record<string, unknown>;
}

export interface LoopPayload {
  glucose: number;
  net_iob: number;
  correction_units: number;
  commanded_rate: number;
  mode: "normal" | "shutoff";
  settings: TherapySettings;
}

/** An accepted temp command, reconstructed from pump records. */
export interface TempCommand {
  at: number; // epoch seconds
  rate: number; // U/hr
  durationMinutes: number;
}

export interface BolusDose {
  at: number; // epoch seconds
  units: number;
}

export interface Mismatch {
  seq: number;
  field: string;
  logged: number;
  recomputed: number;
}

export interface SanityFailure {
  seq: number;
  rule: string;
  detail: string;
}

export interface VerificationReport {
  recordsChecked: number;
  loopRecordsChecked: number;
  mismatches: Mismatch[];
  sanityFailures: SanityFailure[];
}

export function isVerified(report: VerificationReport): boolean {
  return report.mismatches.length === 0 && report.sanityFailures.length === 0;
}
