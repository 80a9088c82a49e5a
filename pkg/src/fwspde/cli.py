"""Command line entry point.

One subcommand per experiment type; every subcommand takes --config plus
optional --seed / --threads / --out overrides.  Exit codes: 0 ok,
2 validation, 3 I/O, 4 numerical failure, 5 budget rejection.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .config import COMMANDS, load_config
from .errors import (
    BlowUp,
    BudgetExceeded,
    ConfigError,
    NotConverged,
    PicardDiverged,
)
from .parallel import default_threads
from .runner import run

EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4
EXIT_BUDGET = 5


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="fwspde",
        description="Spectral small-noise evolution experiments")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="{" + ",".join(COMMANDS) + "}")
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run a '{name}' config")
        p.add_argument("--config", required=True, help="path to a JSON config")
        p.add_argument("--seed", type=int, default=None,
                       help="override master_seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: FWSPDE_THREADS or 1)")
        p.add_argument("--out", default=None, help="override output_dir")
    return parser


def _error(kind: str, message: str, field: str | None = None) -> dict:
    report = {"error": kind, "message": message}
    if field:
        report["field"] = field
    print(json.dumps(report, sort_keys=True), file=sys.stderr)
    return report


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    threads = args.threads if args.threads is not None else default_threads()
    try:
        config = load_config(args.config)
        if config.command != args.command:
            _error("SchemaError",
                   f"config command {config.command!r} does not match "
                   f"subcommand {args.command!r}", "config.command")
            return EXIT_VALIDATION
        if args.seed is not None:
            config = dataclasses.replace(config, master_seed=int(args.seed))
        if args.out is not None:
            config = dataclasses.replace(config, output_dir=args.out)
        manifest = run(config, threads=max(1, threads))
    except ConfigError as exc:
        _error(type(exc).__name__, exc.message, exc.field)
        return EXIT_VALIDATION
    except (ValueError,) as exc:
        _error("ValidationError", str(exc))
        return EXIT_VALIDATION
    except BudgetExceeded as exc:
        _error("BudgetExceeded", str(exc))
        return EXIT_BUDGET
    except (PicardDiverged, BlowUp, NotConverged) as exc:
        _error(type(exc).__name__, str(exc))
        return EXIT_NUMERICAL
    except OSError as exc:
        _error("IoError", str(exc))
        return EXIT_IO
    print(json.dumps({"output_dir": config.output_dir,
                      "files": manifest.files,
                      "config_hash": manifest.config_hash},
                     sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
