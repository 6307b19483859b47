"""Command line entry point: ``asyncsprt run <spec>`` and ``asyncsprt validate <spec>``.

Exit codes: 0 success, 1 validation failure, 2 runtime failure. Errors are
summarised as one JSON object on standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiment import SpecError, emit_csv, format_csv, load_spec, run_experiment, write_plot_stub
from .simulate import RNG_ALGORITHM

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _report(status: str, **payload) -> None:
    print(json.dumps({"status": status, **payload}), file=sys.stderr)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asyncsprt", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment manifest and write a CSV table")
    run.add_argument("spec")
    run.add_argument("--out", help="CSV path (default: manifest `output`, else stdout)")
    run.add_argument("--seed", type=int)
    run.add_argument("--hypothesis", choices=("h0", "h1"))
    run.add_argument("--mc-trials", type=int, dest="mc_trials")
    run.add_argument("--starts", type=int)
    run.add_argument("--workers", type=int, default=1)

    val = sub.add_parser("validate", help="check a manifest without running it")
    val.add_argument("spec")
    return p


def _load(path):
    try:
        return load_spec(path)
    except SpecError as exc:
        _report("invalid", spec=str(path), violations=exc.violations)
    except OSError as exc:
        _report("invalid", spec=str(path), violations=[f"{path}: {exc.strerror or exc}"])
    return None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    spec = _load(args.spec)
    if spec is None:
        return EXIT_INVALID
    if args.command == "validate":
        print(f"ok: {spec.kind} with {len(spec.points)} sweep point(s)")
        return EXIT_OK

    try:
        spec = spec.with_overrides(
            seed=args.seed, hypothesis=args.hypothesis, mc_trials=args.mc_trials, starts=args.starts
        )
    except ValueError as exc:
        _report("invalid", spec=str(args.spec), violations=[str(exc)])
        return EXIT_INVALID

    try:
        rows = run_experiment(spec, workers=args.workers)
        out = args.out or spec.output
        if out:
            emit_csv(rows, out)
            write_plot_stub(out)
        else:
            sys.stdout.write(format_csv(rows))
    except Exception as exc:
        _report("error", error=f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME

    failed = [{"sweep_key": r.sweep_key, "error": r.error} for r in rows if r.error]
    if failed:
        _report("error", failed_points=failed)
        return EXIT_RUNTIME
    if spec.mc_trials > 0:
        logging.getLogger(__name__).info("rng: %s", RNG_ALGORITHM)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
