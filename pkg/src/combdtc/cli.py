"""Command line entry point: ``combdtc run|preset|validate``.

Exit codes: 0 success, 1 config error, 2 resource guard, 3 numerical
failure.  The worker count comes from ``COMBDTC_WORKERS``.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, InvalidParameter, NumericalFailure, ResourceGuardError
from .harness import load_spec, preset_spec, run_experiment, validate_spec, workers_from_env, PRESET_NAMES

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_NUMERICAL = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="combdtc", description="Kicked random Ising chain with delayed feedback.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a config file or a manifest")
    run.add_argument("config")
    run.add_argument("--output", help="override the output directory")
    pre = sub.add_parser("preset", help="run a named preset")
    pre.add_argument("name", choices=PRESET_NAMES)
    pre.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "preset":
            spec = preset_spec(args.name, args.override)
        else:
            try:
                spec = load_spec(args.config)
            except OSError as exc:
                raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from None
        if args.command == "validate":
            points = validate_spec(spec)
            print(f"ok: {len(points)} run(s), engine={spec.engine}, realizations={spec.realizations}")
            for label, _, p in points:
                print(f"  {label}: n_sites={p.n_sites} gamma_l={p.gamma_l} gamma_r={p.gamma_r} phi={p.phi:.6g}")
            return EXIT_OK
        if getattr(args, "output", None):
            spec.output = args.output
        manifest = run_experiment(spec, workers=workers_from_env())
        for run in manifest["runs"]:
            print(f"{spec.output}/{run['file']}")
        return EXIT_OK
    except (ConfigError, InvalidParameter) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceGuardError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
