"""Command-line entry point.

Exit codes: 0 success, 1 invalid config (or a failed embedded check in
``report``), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .experiments import (load_artifacts, report_summary, run_capacity_sweep, run_control_experiment,
                          run_corridor_demo)

RUNNERS = {
    "capacity-sweep": run_capacity_sweep,
    "control-sim": run_control_experiment,
    "corridor-demo": run_corridor_demo,
}


def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="scenario TOML file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--replicates", type=int, help="override the replicate count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lawnsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        _common(sub.add_parser(name, help=f"run the {name} experiment"))
    rep = sub.add_parser("report", help="summarize a finished run directory")
    _common(rep, config_required=False)
    rep.add_argument("run_dir", nargs="?", help="run directory (defaults to --out or the config's output_dir)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = None
        if args.config:
            cfg = load_config(args.config).with_overrides(args.seed, args.replicates, args.out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1

    try:
        if args.command == "report":
            run_dir = args.run_dir or args.out or (cfg.output_dir if cfg else None)
            if run_dir is None:
                print("report needs a run directory, --out or --config", file=sys.stderr)
                return 1
            artifacts = load_artifacts(run_dir)
            print(report_summary(artifacts))
            return 0 if artifacts.ok else 1
        artifacts = RUNNERS[args.command](cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - surfaced as exit code 2
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    print(report_summary(artifacts))
    print(f"wrote {len(artifacts.files)} files to {artifacts.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
