/**
 * Strict line-by-line parsing of the JSONL event log.
 *
 * Parse problems are collected, never thrown past the caller: a
 * verifier's job is to report what is wrong with a log, not to die on
 * it. Structural ordering rules (gap-free seq, monotone timestamps)
 * are checked here as well, attributed to the record where they bite.
 */

import { LogRecord, SanityFailure } from "./types";

const TIMESTAMP = /^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})Z$/;
const EVENT_TYPES = new Set(["cgm", "loop", "pump", "alert", "settings"]);

export function parseTimestamp(text: string): number | null {
  const match = TIMESTAMP.exec(text);
  if (!match) return null;
  const [, y, mo, d, h, mi, s] = match;
  const ms = Date.UTC(
    Number(y),
    Number(mo) - 1,
    Number(d),
    Number(h),
    Number(mi),
    Number(s),
  );
  return ms / 1000;
}

export interface ParseResult {
  records: LogRecord[];
  failures: SanityFailure[];
}

export function parseLog(text: string): ParseResult {
  const records: LogRecord[] = [];
  const failures: SanityFailure[] = [];
  const lines = text.split("\n");
  if (lines.length > 0 && lines[lines.length - 1] === "") lines.pop();

  let expectedSeq = 0;
  let lastAt: number | null = null;

  lines.forEach((line, index) => {
    const lineNo = index + 1;
    const fail = (rule: string, detail: string, seq = expectedSeq) => {
      failures.push({ seq, rule, detail: `line ${lineNo}: ${detail}` });
    };

    let raw: unknown;
    try {
      raw = JSON.parse(line);
    } catch (err) {
      fail("parse-error", `${(err as Error).message}`);
      expectedSeq += 1;
      return;
    }
    if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
      fail("parse-error", "record is not an object");
      expectedSeq += 1;
      return;
    }
    const obj = raw as Record<string, unknown>;

    if (obj.schema_version !== 1) {
      fail("parse-error", `unsupported schema_version ${obj.schema_version}`);
      expectedSeq += 1;
      return;
    }
    const seq = obj.seq;
    if (typeof seq !== "number" || !Number.isInteger(seq)) {
      fail("parse-error", "seq is not an integer");
      expectedSeq += 1;
      return;
    }
    if (seq !== expectedSeq) {
      failures.push({
        seq,
        rule: "seq-gap",
        detail: `line ${lineNo}: expected seq ${expectedSeq}, found ${seq}`,
      });
    }
    expectedSeq = seq + 1;

    const at = typeof obj.at === "string" ? parseTimestamp(obj.at) : null;
    if (at === null) {
      fail("parse-error", `bad timestamp ${JSON.stringify(obj.at)}`, seq);
      return;
    }
    if (lastAt !== null && at < lastAt) {
      failures.push({
        seq,
        rule: "timestamp-regression",
        detail: `line ${lineNo}: ${obj.at} is earlier than its predecessor`,
      });
    }
    lastAt = at;

    const type = obj.type;
    if (typeof type !== "string" || !EVENT_TYPES.has(type)) {
      fail("parse-error", `unknown type ${JSON.stringify(type)}`, seq);
      return;
    }
    const payload = obj.payload;
    if (typeof payload !== "object" || payload === null || Array.isArray(payload)) {
      fail("parse-error", "payload is not an object", seq);
      return;
    }

    records.push({
      seq,
      at,
      type: type as LogRecord["type"],
      payload: payload as Record<string, unknown>,
    });
  });

  return { records, failures };
}

export function asNumber(value: unknown): number | null {
  return typeof value === "number" && Number.isFinite(value) ? value : null;
}
