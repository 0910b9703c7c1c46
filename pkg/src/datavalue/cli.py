"""Command-line entry point.

    datavalue value  --config exp.toml [--out DIR] [--seed N ...] [--workers N]
    datavalue detect --config exp.toml
    datavalue curve  --config exp.toml --direction removal|addition
    datavalue report --in DIR

Exit codes: 0 success, 1 configuration error, 2 finished with error rows.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .harness import ConfigError, parse_config, read_csv, run_experiment, with_tasks, write_csv
from .plots import emit_svg

log = logging.getLogger("datavalue")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="datavalue", description="Data valuation benchmark")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_args(p):
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--out", help="output directory (default: output_dir from config)")
        p.add_argument("--seed", type=int, nargs="+", help="override the config seeds")
        p.add_argument("--workers", type=int, help="concurrent (valuator, seed) cells")

    run_args(sub.add_parser("value", help="compute values and run the configured tasks"))
    run_args(sub.add_parser("detect", help="noisy data detection only"))
    curve = sub.add_parser("curve", help="point removal or addition curves")
    run_args(curve)
    curve.add_argument("--direction", choices=("removal", "addition"), required=True)
    rep = sub.add_parser("report", help="render SVG charts from a results directory")
    rep.add_argument("--in", dest="in_dir", required=True)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report":
        paths = emit_svg(read_csv(args.in_dir), args.in_dir)
        for p in paths:
            print(p)
        return 0
    try:
        cfg = parse_config(args.config)
        if args.seed:
            cfg = replace(cfg, seeds=tuple(args.seed))
        if args.command == "detect":
            cfg = with_tasks(cfg, ["detect"])
        elif args.command == "curve":
            cfg = with_tasks(cfg, [args.direction])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    report = run_experiment(cfg, args.workers)
    for path in write_csv(report, args.out or cfg.output_dir):
        print(path)
    for name, seed, msg in report.errors:
        print(f"error in ({name}, seed {seed}): {msg}", file=sys.stderr)
    return 2 if report.errors else 0


if __name__ == "__main__":
    sys.exit(main())
