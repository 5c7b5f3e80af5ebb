"""Command-line entry point: ``metatune run|report|validate``."""

from __future__ import annotations

import argparse
import logging
import sys

from metatune.config import ConfigError, load_config


def _cmd_run(args) -> int:
    from metatune.harness import resolve_out_root, run_experiment

    config = load_config(args.config)
    execs = run_experiment(config, out=args.out, seed_offset=args.seed_offset, jobs=args.jobs,
                           backend=args.backend)
    root = resolve_out_root(args.out) / config.name
    for e in execs:
        best = max(r.y for r in e.records)
        print(f"{e.optimizer:14s} seed{e.seed:<4d} best_y={best:.6g}  -> {e.path}")
    print(f"results in {root}")
    return 0


def _cmd_report(args) -> int:
    from metatune.harness import report

    res = report(args.inputs, out=args.out)
    last = {}
    for row in res.rows:
        last[row["optimizer"]] = row
    for name, row in last.items():
        print(f"{name:14s} n={row['executions']}  final mean_best={row['mean_best']:.6g} "
              f"[{row['ci_low']:.6g}, {row['ci_high']:.6g}]")
    if res.excluded:
        print(f"warning: {len(res.excluded)} execution(s) excluded", file=sys.stderr)
    if args.out:
        print(f"tables written to {args.out}")
    return 0


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    print(f"{args.config}: ok ({config.agent_kind} on {config.env.kind}, "
          f"{len(config.optimizers)} optimizer(s) x {len(config.seeds)} seed(s), "
          f"{config.meta_episodes} meta-episodes)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metatune",
                                     description="Hyperparameter optimization for RL agents.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every optimizer/seed execution of a config")
    run.add_argument("--config", required=True, help="experiment JSON file")
    run.add_argument("--seed-offset", type=int, default=0, help="added to every configured seed")
    run.add_argument("--out", default=None, help="output root (default $METATUNE_OUT or ./results)")
    run.add_argument("--jobs", type=int, default=1, help="executions to run in parallel")
    run.add_argument("--backend", choices=("python", "cython"), default=None,
                     help="force a replay/Q-learning kernel backend")
    run.set_defaults(func=_cmd_run)

    rep = sub.add_parser("report", help="aggregate finished executions into comparison tables")
    rep.add_argument("--in", dest="inputs", nargs="+", required=True,
                     help="result directories to scan")
    rep.add_argument("--out", default=None, help="directory for comparison CSVs")
    rep.set_defaults(func=_cmd_report)

    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("--config", required=True)
    val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
