"""Command-line interface.

    cooploc run <config.json> [--seed S] [--out DIR] [--algorithms a,b]
                              [--n-realizations N] [--threads T]
    cooploc scenario <config.json> [--seed S] [--out FILE]
    cooploc check [--seed S]
    cooploc plot-data <run-dir> [--out DIR]
"""

import argparse
import dataclasses
import json
import sys

from . import checks, harness
from .harness import ConfigError
from .network import GenerationError, generate_scenario


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cooploc",
        description="Cooperative range-based localization simulator and solvers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo experiment from a config file")
    run.add_argument("config", help="path to a JSON experiment config")
    run.add_argument("--seed", type=int, default=None, help="override master_seed")
    run.add_argument("--out", default=None, help="override output_dir")
    run.add_argument("--algorithms", default=None, help="comma-separated subset of ppm,pocs,ppb")
    run.add_argument("--n-realizations", type=int, default=None, help="override n_realizations")
    run.add_argument("--threads", type=int, default=1, help="parallel realizations (0 = auto)")

    scen = sub.add_parser("scenario", help="emit one scenario JSON from a config file")
    scen.add_argument("config", help="path to a JSON experiment config")
    scen.add_argument("--seed", type=int, default=None, help="override master_seed")
    scen.add_argument("--out", default=None, help="output file (default: stdout)")

    chk = sub.add_parser("check", help="run the invariant/diagnostic suite")
    chk.add_argument("--seed", type=int, default=0)

    plot = sub.add_parser("plot-data", help="re-emit CDF/residual CSVs from stored run records")
    plot.add_argument("run_dir", help="directory produced by 'cooploc run'")
    plot.add_argument("--out", default=None, help="write CSVs here instead of into the run dir")

    return parser


def _apply_overrides(cfg, args):
    updates = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if getattr(args, "out", None) is not None:
        updates["output_dir"] = args.out
    if getattr(args, "algorithms", None) is not None:
        updates["algorithms"] = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    if getattr(args, "n_realizations", None) is not None:
        updates["n_realizations"] = args.n_realizations
    if not updates:
        return cfg
    try:
        return dataclasses.replace(cfg, **updates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_run(args) -> int:
    cfg = _apply_overrides(harness.load_config(args.config), args)
    manifest = harness.run_experiment(cfg, threads=args.threads)
    n_failed = len(manifest["failures"])
    print(f"wrote {cfg.output_dir} ({cfg.n_realizations} realizations, {n_failed} solver failures)")
    return 0 if not manifest["aborted"] else 1


def _cmd_scenario(args) -> int:
    cfg = _apply_overrides(harness.load_config(args.config), args)
    rng = harness.stream_rng(cfg.master_seed, 1, "scenario")
    scenario = generate_scenario(cfg.deployment, cfg.error, rng)
    if args.out is None:
        json.dump(scenario.to_json_dict(), sys.stdout, indent=1)
        print()
    else:
        scenario.save(args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_check(args) -> int:
    results = checks.run_checks(seed=args.seed)
    failed = 0
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        failed += 0 if ok else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def _cmd_plot_data(args) -> int:
    written = harness.plot_data(args.run_dir, args.out)
    target = args.out if args.out is not None else args.run_dir
    names = ", ".join(sorted(written.values())) if written else "nothing (no records found)"
    print(f"wrote {names} in {target}")
    return 0 if written else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "scenario": _cmd_scenario,
        "check": _cmd_check,
        "plot-data": _cmd_plot_data,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (GenerationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
