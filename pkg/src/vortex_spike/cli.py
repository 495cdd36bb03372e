"""Command line: vortex-spike {ground-state, solve, sweep, diagnose, plot}.

Exit codes: 0 ok, 1 input error, 2 numerical failure (or failed thresholds
under ``diagnose --strict``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .pipeline import (
    NUMERICAL_ERRORS,
    ConfigError,
    RunConfig,
    StageError,
    cmd_diagnose,
    cmd_ground_state,
    cmd_plot,
    cmd_solve,
    cmd_sweep,
    format_report,
)

OK, INPUT_ERROR, NUMERICAL_FAILURE = 0, 1, 2


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its keys")
    common.add_argument("--delta", type=float, help="scale parameter of the spike")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker processes for sweeps")
    common.add_argument("--seedless", action="store_true", help="accepted for compatibility; nothing is random")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="vortex-spike", description="Capillary-gravity water waves with a vortex spike.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("ground-state", parents=[common], help="radial ground state and nondegeneracy audit")
    sub.add_parser("solve", parents=[common], help="root in tau, physical wave, diagnostics, figures")
    sub.add_parser("sweep", parents=[common], help="solves over the delta lists and scaling regressions")
    d = sub.add_parser("diagnose", parents=[common], help="threshold table of a solution bundle")
    d.add_argument("bundle", nargs="?", help="bundle directory (default: the one for --delta under --out)")
    d.add_argument("--strict", action="store_true", help="exit 2 when a threshold fails")
    p = sub.add_parser("plot", parents=[common], help="regenerate SVG figures of a bundle")
    p.add_argument("bundle", nargs="?")
    return ap


def _config(args) -> RunConfig:
    overrides = {"delta": args.delta, "out": args.out, "threads": args.threads}
    if args.config:
        return RunConfig.load(args.config, overrides)
    return RunConfig.from_dict({}, overrides)


def _bundle(args, cfg):
    from .pipeline import bundle_dir

    path = Path(args.bundle) if args.bundle else bundle_dir(cfg.out, cfg.delta)
    if not (path / "diagnostics.json").exists():
        raise ConfigError(f"no solution bundle at {path}")
    return path


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        if args.command == "ground-state":
            s = cmd_ground_state(cfg)
            print(f"U(0) = {s['center_value']:.10f}  lambda = {s['lambda']:.8f}  -> {cfg.out}")
        elif args.command == "solve":
            res = cmd_solve(cfg)
            d = res.diagnostics
            print(f"delta = {res.delta}  tau* = {d['tau']:+.10e}  energy = {d['energy']:.8f}  -> {res.directory}")
        elif args.command == "sweep":
            print(format_report(cmd_sweep(cfg)))
        elif args.command == "diagnose":
            table, ok = cmd_diagnose(_bundle(args, cfg))
            for name, row in table.items():
                print(f"{'PASS' if row['pass'] else 'FAIL'}  {name:<20} {row['rule']}")
            if args.strict and not ok:
                return NUMERICAL_FAILURE
        elif args.command == "plot":
            for f in cmd_plot(_bundle(args, cfg)):
                print(f)
    except (ConfigError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except StageError as exc:
        print(f"numerical failure in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return NUMERICAL_FAILURE
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_FAILURE
    return OK


if __name__ == "__main__":
    sys.exit(main())
