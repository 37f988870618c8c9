"""Command-line front end.

Subcommands run one experiment each from a TOML config and write results.csv
plus a report.json sidecar; `replay` re-runs a finished report from its
embedded config and seed and compares the value columns byte for byte.

Exit codes: 0 the experiment's verdict criterion holds (or replay matches),
1 it does not, 2 configuration / artifact errors, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS
from .runs import replay, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levyeddy", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--workers", type=int, default=1, help="path-level worker processes")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p = sub.add_parser("replay", help="re-run a report and compare byte-wise")
    p.add_argument("report", help="path to results.csv or its directory")
    p.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "replay":
        return replay(args.report, workers=args.workers)
    from .config import parse_config, ConfigError

    try:
        cfg = parse_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}")
        return 2
    except ConfigError as exc:
        print(f"error: {exc}")
        return 2
    if cfg.experiment != args.command:
        print(
            f"error: config field 'experiment': is {cfg.experiment!r} but the "
            f"{args.command!r} subcommand was invoked"
        )
        return 2
    return run(args.config, args.out, workers=args.workers, seed_override=args.seed)


if __name__ == "__main__":
    sys.exit(main())
