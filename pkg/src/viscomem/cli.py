"""Command line entry point: ``viscomem <kind> --config FILE --out DIR --seed N``.

Exit codes: 0 every check passed, 1 a check failed, 2 usage or
configuration error, 3 numerical failure.
"""

import argparse
import logging
import os
import sys

from .config import KINDS, ConfigError, load_config
from .experiments import EXIT_CONFIG, EXIT_PASS, run_experiment, write_error_record

log = logging.getLogger("viscomem")

HELP = {
    "kernel-check": "quadrature weights, positivity certificate and exponential-sum fit",
    "run-transient": "time-march the flow and write energy diagnostics",
    "solve-steady": "solve the steady problem with effective viscosity",
    "decay-study": "fit decay rates of the distance to the steady state",
    "convergence-study": "observed orders against a manufactured solution",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="viscomem", description="Flow with weakly singular memory.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="COMMAND")
    for kind in KINDS:
        p = sub.add_parser(kind, help=HELP[kind], description=HELP[kind])
        p.add_argument("--config", required=True, help="configuration file")
        p.add_argument("--out", default=None, help="output directory (overrides [output] directory)")
        p.add_argument("--seed", type=int, default=None, help="random seed (overrides [output] seed)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        spec = load_config(args.config, kind=args.kind)
        spec = spec.with_overrides(out=args.out, seed=args.seed)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if args.out:
            write_error_record(args.out, EXIT_CONFIG, str(exc), getattr(exc, "key", None))
        return EXIT_CONFIG
    if not spec.out:
        print("error: no output directory (use --out or [output] directory)", file=sys.stderr)
        return EXIT_CONFIG
    log.info("running %s into %s", spec.kind, spec.out)
    outcome = run_experiment(spec)
    if outcome.status == EXIT_CONFIG or outcome.message:
        print(f"error: {outcome.message}", file=sys.stderr)
    summary = os.path.join(spec.out, "summary.txt")
    if os.path.exists(summary) and outcome.checks:
        with open(summary) as fh:
            sys.stdout.write(fh.read())
    return outcome.status


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
