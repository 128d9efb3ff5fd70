"""Command-line interface: seeded, resumable pipeline stages.

Exit codes: 0 success, 2 configuration error, 3 data error (missing or
stale stage inputs, malformed records), 4 infeasible (stratification
budget exhausted, unattainable target precision).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, default_config, load_config, write_config
from .evaluate import StratificationError, TargetPrecisionError
from .pipeline import (
    STAGE_ORDER,
    DataError,
    RunContext,
    run_all,
    run_stages,
)
from .records import RecordFormatError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INFEASIBLE = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ichcast",
        description="Multi-scale waveform features and 8-hour forecasting of "
                    "acute intracranial hypertension.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    init = sub.add_parser("init", help="write a default config file")
    init.add_argument("--config", default="ichcast.json", help="path to write")

    def add_run_args(p):
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--out", required=True, help="run output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (results are worker-count independent)")

    for name in STAGE_ORDER:
        p = sub.add_parser(name, help=f"run the {name} stage")
        add_run_args(p)
        if name == "extract":
            p.add_argument("--channels", default=None,
                           help="comma-separated channel subset (ablation)")
            p.add_argument("--categories", default=None,
                           help="comma-separated feature-category subset (ablation)")
            p.add_argument("--summaries", default=None,
                           help="comma-separated summary subset (ablation)")
            p.add_argument("--max-scale", type=int, default=None,
                           help="largest history scale to keep (ablation)")
            p.add_argument("--csv", action="store_true",
                           help="also export the feature matrix as CSV")
            p.add_argument("--dump-pulses", default=None, metavar="DIR",
                           help="write per-minute averaged pulses as CSV files")

    run = sub.add_parser("run", help="run every stage in order")
    add_run_args(run)
    return parser


def _apply_extract_flags(cfg: dict, args) -> dict:
    ex = cfg["extract"]
    if args.channels:
        ex["channels"] = [c.strip() for c in args.channels.split(",") if c.strip()]
    if args.categories:
        ex["categories"] = [c.strip() for c in args.categories.split(",") if c.strip()]
    if args.summaries:
        ex["summaries"] = [c.strip() for c in args.summaries.split(",") if c.strip()]
    if args.max_scale is not None:
        ex["max_scale"] = args.max_scale
    if args.csv:
        ex["write_csv"] = True
    return cfg


def _dump_pulses(ctx: RunContext, out_dir: str) -> None:
    """Debug export: averaged wICP/wABP pulses per minute, one CSV each."""
    import csv as _csv

    from .pipeline import accepted_segments, records_dir_of, schema_from_config
    from .extract import extract_record
    from .records import load_record

    dump_root = Path(out_dir)
    schema = schema_from_config(ctx.cfg["extract"])
    for seg in accepted_segments(ctx):
        seg_dir = dump_root / seg
        seg_dir.mkdir(parents=True, exist_ok=True)
        record = load_record(records_dir_of(ctx) / seg)

        def writer(minute: int, channel: str, averaged) -> None:
            path = seg_dir / f"{channel}_minute{minute:05d}.csv"
            with path.open("w", newline="") as fh:
                w = _csv.writer(fh)
                w.writerow(["index", "value"])
                for i, v in enumerate(averaged.samples):
                    w.writerow([i, repr(float(v))])

        extract_record(record, schema, pulse_dump=writer)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "init":
        path = write_config(default_config(), args.config)
        print(f"wrote default config to {path}")
        return EXIT_OK

    try:
        cfg = load_config(args.config)
        if args.command == "extract":
            cfg = _apply_extract_flags(cfg, args)
        workers = args.workers if args.workers is not None else int(cfg.get("workers", 1))
        ctx = RunContext(out=Path(args.out), cfg=cfg, workers=workers)
        if args.command == "run":
            run_all(ctx)
        else:
            run_stages(ctx, [args.command])
            if args.command == "extract" and args.dump_pulses:
                _dump_pulses(ctx, args.dump_pulses)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, RecordFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (StratificationError, TargetPrecisionError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"{args.command}: done (outputs in {args.out})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
