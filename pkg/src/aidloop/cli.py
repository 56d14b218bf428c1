"""Command-line front end: simulate scenarios, summarize logs, check them.

Exit codes: 0 success, 1 usage, 2 validation (bad scenario/unreadable
input), 3 verification mismatch. Output is deterministic given the
inputs and seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional

from aidloop import metrics as metrics_mod
from aidloop.core import GlucoseReading
from aidloop.eventlog import LogError, read_all
from aidloop.replay import delivery_history, reconstruct, sanity_check
from aidloop.simulator import run_scenario, scenario_from_file
from aidloop.watchdog import Watchdog

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_MISMATCH = 3


def _print_metrics(m: metrics_mod.SummaryMetrics, quiet: bool):
    if quiet:
        return
    print(f"mean glucose   {m.mean_glucose:8.1f} mg/dl")
    print(f"GMI            {m.gmi_percent:8.2f} %")
    print(f"TIR 70-140     {m.tir_tight * 100:8.1f} %")
    print(f"TIR 70-180     {m.tir_standard * 100:8.1f} %")
    print(f"below 70       {m.pct_below_70 * 100:8.1f} %")
    print(f"days           {len(m.daily_averages):8d}")


def cmd_simulate(args) -> int:
    if not os.path.isfile(args.scenario):
        print(f"error: scenario file not found: {args.scenario}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        scenario = scenario_from_file(args.scenario)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    result = run_scenario(scenario, args.out_log, seed_override=args.seed)
    if not args.quiet:
        print(f"log written to {result.log_path}")
    _print_metrics(result.metrics, args.quiet)
    return EXIT_OK


def _load_log(path: str):
    if not os.path.isfile(path):
        print(f"error: log file not found: {path}", file=sys.stderr)
        return None
    try:
        return read_all(path)
    except LogError as e:
        print(f"error: unreadable log: {e}", file=sys.stderr)
        return None


def cmd_metrics(args) -> int:
    records = _load_log(args.log)
    if records is None:
        return EXIT_VALIDATION
    readings = [
        GlucoseReading(at=r.at, value=r.payload["value"]) for r in records if r.type == "cgm"
    ]
    if not readings:
        print("error: log contains no CGM records", file=sys.stderr)
        return EXIT_VALIDATION
    m = metrics_mod.compute(readings)
    _print_metrics(m, args.quiet)
    if args.csv:
        metrics_mod.write_csv(m, args.csv)
        if not args.quiet:
            print(f"daily averages written to {args.csv}")
    return EXIT_OK


def cmd_watchdog(args) -> int:
    records = _load_log(args.log)
    if records is None:
        return EXIT_VALIDATION
    stream = reconstruct(records)
    if stream.settings is None or stream.curve is None:
        print("error: log has no settings record", file=sys.stderr)
        return EXIT_VALIDATION
    watchdog = Watchdog()
    count = 0
    for i, reading in enumerate(stream.readings):
        window = [r for r in stream.readings[: i + 1] if (reading.at - r.at).total_seconds() <= 3600]
        history = delivery_history(stream, reading.at)
        alert = watchdog.evaluate(window, history, stream.settings, stream.curve)
        if alert is not None:
            count += 1
            if not args.quiet:
                print(
                    f"{alert.at.strftime('%Y-%m-%dT%H:%M:%SZ')}  {alert.kind}  "
                    f"predicted {alert.predicted_glucose:.1f} mg/dl in {alert.horizon:.0f} min"
                )
    if not args.quiet:
        print(f"{count} alert(s) over {len(stream.readings)} readings")
    return EXIT_OK


def cmd_verify(args) -> int:
    if not os.path.isfile(args.log):
        print(f"error: log file not found: {args.log}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        records = read_all(args.log)
    except LogError as e:
        print(f"verification failed: {e}", file=sys.stderr)
        return EXIT_MISMATCH
    failures = sanity_check(records)
    if failures:
        for f in failures:
            print(f"verification failed: seq {f.seq} [{f.rule}] {f.detail}", file=sys.stderr)
        return EXIT_MISMATCH
    if not args.quiet:
        print(f"ok: {len(records)} records passed sanity checks")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aidloop",
        description="Closed-loop insulin delivery simulator and log tools",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress normal output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario file and write its event log")
    p.add_argument("scenario", help="scenario JSON document")
    p.add_argument("out_log", help="path for the event log")
    p.add_argument("--seed", type=int, default=None, help="override the scenario noise seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", help="summarize the CGM readings in a log")
    p.add_argument("log")
    p.add_argument("--csv", default=None, help="also write daily averages to this CSV")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("watchdog", help="re-evaluate watchdog alerts offline from a log")
    p.add_argument("log")
    p.set_defaults(func=cmd_watchdog)

    p = sub.add_parser("verify", help="run primary-side sanity checks over a log")
    p.add_argument("log")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
