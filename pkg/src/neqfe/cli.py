"""Command-line entry point.

    neqfe run CONFIG [--set key=value ...]
    neqfe ce CONFIG [--set key=value ...]
    neqfe reference CONFIG [--set key=value ...]

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
The worker thread count is read from NEQFE_NUM_THREADS.
"""
from __future__ import annotations

import argparse
import json
import sys

from .crossentropy import CEError
from .estimators import NumericalError
from .experiment import ConfigError, parse_config, run_experiment, run_pipeline_ce, run_reference
from .model import GeometryError, ModelError
from .oracle import QuadratureError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _parser():
    ap = argparse.ArgumentParser(prog="neqfe", description="Nonequilibrium free-energy experiments")
    ap.add_argument("command", choices=("run", "ce", "reference"))
    ap.add_argument("config", help="key = value configuration file ('-' for none)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        text = ""
        if args.config != "-":
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as exc:
                print(f"error: cannot read config: {exc}", file=sys.stderr)
                return EXIT_IO
        cfg = parse_config(text, args.set)
        if args.command == "reference":
            out = run_reference(cfg)
            print(json.dumps(out))
        else:
            outcome = (run_pipeline_ce if args.command == "ce" else run_experiment)(cfg)
            print(json.dumps(outcome.report.as_dict()))
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, CEError, QuadratureError, GeometryError, ModelError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
