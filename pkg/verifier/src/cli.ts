#!/usr/bin/env node
/**
 * verify-log <path> [--report <csv>] [--quiet]
 *
 * Exit codes: 0 verified, 1 usage, 2 unreadable input,
 * 3 mismatch or sanity failure.
 */

import * as fs from "fs";
import { isVerified, VerificationReport } from "./types";
import { verifyLogText } from "./verify";

function writeCsvReport(report: VerificationReport, path: string): void {
  const lines = ["kind,seq,field_or_rule,logged,recomputed,detail"];
  for (const m of report.mismatches) {
    lines.push(`mismatch,${m.seq},${m.field},${m.logged},${m.recomputed},`);
  }
  for (const f of report.sanityFailures) {
    const detail = f.detail.replace(/"/g, "'");
    lines.push(`sanity,${f.seq},${f.rule},,,"${detail}"`);
  }
  fs.writeFileSync(path, lines.join("\n") + "\n", "utf-8");
}

export function main(argv: string[]): number {
  const args = argv.filter((a) => a !== "verify-log");
  let reportPath: string | null = null;
  let quiet = false;
  const positional: string[] = [];
  for (let i = 0; i < args.length; i++) {
    if (args[i] === "--report") {
      reportPath = args[++i] ?? null;
      if (reportPath === null) {
        console.error("usage: verify-log <path> [--report <csv>] [--quiet]");
        return 1;
      }
    } else if (args[i] === "--quiet") {
      quiet = true;
    } else {
      positional.push(args[i]);
    }
  }
  if (positional.length !== 1) {
    console.error("usage: verify-log <path> [--report <csv>] [--quiet]");
    return 1;
  }

  let text: string;
  try {
    text = fs.readFileSync(positional[0], "utf-8");
  } catch (err) {
    console.error(`error: cannot read ${positional[0]}: ${(err as Error).message}`);
    return 2;
  }

  const report = verifyLogText(text);
  if (reportPath !== null) writeCsvReport(report, reportPath);

  for (const f of report.sanityFailures) {
    console.error(`sanity failure: seq ${f.seq} [${f.rule}] ${f.detail}`);
  }
  for (const m of report.mismatches) {
    console.error(
      `mismatch: seq ${m.seq} ${m.field} logged ${m.logged} recomputed ${m.recomputed}`,
    );
  }
  if (!isVerified(report)) {
    console.error(
      `FAILED: ${report.mismatches.length} mismatch(es), ` +
        `${report.sanityFailures.length} sanity failure(s) ` +
        `over ${report.recordsChecked} records`,
    );
    return 3;
  }
  if (!quiet) {
    console.log(
      `verified: ${report.recordsChecked} records, ` +
        `${report.loopRecordsChecked} loop decisions replayed, 0 mismatches`,
    );
  }
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
