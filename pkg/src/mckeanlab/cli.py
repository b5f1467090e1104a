"""Command-line entry point.

    mckeanlab [--seed N] [--threads T] [--strict-deterministic] [--config FILE]
              [--output DIR] [--set SECTION.KEY=VALUE ...] SUBCOMMAND [options]

Outputs go to ``--output`` or to ``$MCKEANLAB_OUTPUT_ROOT/<output_dir>``
(root defaults to ``./runs``). Exit status is 0 when every check passed, 1 when
some check failed and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numba

from .config import SUBCOMMANDS, ExperimentConfig, default_config

OUTPUT_ROOT_ENV = "MCKEANLAB_OUTPUT_ROOT"
log = logging.getLogger("mckeanlab")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mckeanlab", description="McKean SDE numerical laboratory")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for compiled kernels")
    parser.add_argument("--strict-deterministic", action="store_true",
                        help="single thread; outputs are bit-identical across runs")
    parser.add_argument("--config", type=Path, default=None, help="INI experiment config")
    parser.add_argument("--output", type=Path, default=None, help="output directory (overrides the root)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value; repeatable")
    parser.add_argument("--write-config", type=Path, default=None, help="write the resolved config and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        if name == "selftest":
            p.add_argument("--scale", choices=("smoke", "full"), default=None)
            p.add_argument("--only", default=None, help="comma-separated criterion numbers")
        if name == "convergence-study":
            p.add_argument("--axis", default=None)
            p.add_argument("--levels", default=None, help="comma-separated levels")
            p.add_argument("--seeds", default=None, help="comma-separated seeds")
    return parser


def _apply_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise ValueError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        cfg.set(section.strip(), name.strip(), value.strip())
    return cfg


def resolve_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = ExperimentConfig.load(args.config)
        if cfg.subcommand != args.subcommand:
            raise ValueError(f"config is for {cfg.subcommand!r}, not {args.subcommand!r}")
    else:
        cfg = default_config(args.subcommand)
    if args.seed is not None:
        cfg.seed = args.seed
    return _apply_overrides(cfg, args.overrides)


def output_dir(args, cfg: ExperimentConfig) -> Path:
    if args.output is not None:
        return args.output
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / cfg.output_dir


def set_threads(threads: int | None, strict: bool) -> int:
    # the portable layer; the compiled kernels here are serial, so results never depend on it
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"
    n = 1 if strict else (threads or numba.config.NUMBA_NUM_THREADS)
    n = max(1, min(n, numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ValueError, KeyError, OSError) as exc:
        parser.error(str(exc))
    if args.write_config is not None:
        cfg.save(args.write_config)
        return 0
    threads = set_threads(args.threads, args.strict_deterministic)
    out = output_dir(args, cfg)
    log.info("subcommand %s, seed %d, %d thread(s), output %s", cfg.subcommand, cfg.seed, threads, out)

    if cfg.subcommand == "selftest":
        from .selftest import run_selftest

        scale = args.scale or cfg.get("selftest", "scale", "smoke")
        only = None if args.only is None else [int(v) for v in args.only.split(",") if v.strip()]
        reports = run_selftest(scale, out, cfg.seed, only)
        for i, rep in reports.items():
            print(f"criterion {i:2d} {rep.title}: {'PASS' if rep.passed else 'FAIL'}")
        return 0 if all(r.passed for r in reports.values()) else 1

    if cfg.subcommand == "convergence-study":
        from .study import run_convergence_study

        levels = None if args.levels is None else [float(v) for v in args.levels.split(",")]
        seeds = None if args.seeds is None else [int(v) for v in args.seeds.split(",")]
        table = run_convergence_study(cfg, args.axis, levels, seeds, out_dir=out)
        for level, median in zip(table.levels, table.medians):
            print(f"{table.axis}={level:g}: {table.metric}={median:.6g}")
        print(f"log-log slope: {table.slope if table.slope is not None else 'n/a'}")
        return 0

    from .experiments import run

    rep, _ = run(cfg, out)
    print(rep.summary())
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
