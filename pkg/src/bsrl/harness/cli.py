"""Command line: train, eval, regretlab, sweep, plot."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..core import ConfigurationError, ContractViolation
from .config import load_config

log = logging.getLogger("bsrl")


def _parse_grid(items) -> dict:
    grid = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigurationError(f"grid entry {item!r} must be key=[v1, v2, ...]")
        key, raw = item.split("=", 1)
        try:
            values = json.loads(raw)
        except json.JSONDecodeError:
            values = raw.split(",")
        if not isinstance(values, list) or not values:
            raise ConfigurationError(f"grid entry {key!r} needs a non-empty JSON list")
        grid[key.strip()] = values
    return grid


def _raw_config(args) -> dict:
    # sweeps vary fields before validation, so they start from the validated base as a dict
    cfg = load_config(args.config, args.set, args.seed)
    return cfg.model_dump(mode="json")


def _labelled_globs(items):
    from .plotting import expand

    out = {}
    for item in items or ():
        label, _, pattern = item.partition("=")
        if not pattern:
            raise ConfigurationError(f"expected LABEL=GLOB, got {item!r}")
        out[label] = expand(pattern)
    return out


def cmd_train(args) -> int:
    from .train import train

    cfg = load_config(args.config, args.set, args.seed)
    out = Path(args.out or f"runs/{Path(args.config).stem}_seed{cfg.seed}")
    result = train(cfg, out)
    print(json.dumps({"out": str(out), "final_return": result.final_eval["return_mean"]}))
    return 0


def cmd_eval(args) -> int:
    from .train import run_eval

    cfg = load_config(args.config, args.set, args.seed)
    greedy = None if args.policy == "config" else args.policy == "greedy"
    report = run_eval(cfg, args.checkpoint, args.episodes, args.out, greedy=greedy)
    print(json.dumps({"return_mean": report["return_mean"], "return_se": report["return_se"]}))
    return 0


def cmd_regretlab(args) -> int:
    from ..regretlab import rows_to_csv, run_study

    rows = run_study(n_mdps=args.n_mdps, seed=args.seed or 0, n_calls=args.n_calls)
    text = rows_to_csv(rows)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "regretlab.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    from . import experiments as ex

    base = _raw_config(args)
    workers = ex.worker_count(args.deterministic)
    out = Path(args.out or f"runs/{args.study}")
    seeds = list(range(args.seeds))
    if args.study == "grid":
        grid = _parse_grid(args.grid)
        if not grid:
            raise ConfigurationError("grid sweep needs at least one --grid key=[...]")
        rows = ex.sweep(base, grid, out, workers)
        print(json.dumps({"out": str(out), "cells": len(rows)}))
    elif args.study == "growth":
        report = ex.reward_set_growth(base, out, seeds=seeds, workers=workers)
        print(json.dumps({"out": str(out), "hbs_gains_more_often_than_sol": report["hbs_gains_more_often_than_sol"]}))
    else:
        report = ex.gamma_sweep(base, out, seeds=seeds, workers=workers)
        print(json.dumps({"out": str(out), "summary": report["summary"]}, sort_keys=True))
    return 0


def cmd_plot(args) -> int:
    from . import plotting
    from .experiments import milestone_study

    out = Path(args.out)
    if args.curves:
        plotting.plot_learning_curves(_labelled_globs(args.curves), out, kind=args.kind, key=args.key)
    elif args.milestones:
        runs = {k: [Path(p).parent for p in v] for k, v in _labelled_globs(args.milestones).items()}
        milestone_study(runs, out)
    elif args.table:
        rows = plotting.read_csv(args.table)
        plotting.plot_series_table(rows, out, x=args.x, y=args.y, group=args.group)
    else:
        raise ConfigurationError("plot needs --curves, --milestones or --table")
    print(str(out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bsrl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def run_args(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="run config JSON")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dot-path override, value parsed as JSON when possible (repeatable)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--deterministic", action="store_true", help="single worker, sequential cells")

    sp = sub.add_parser("train", help="train one run")
    run_args(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    run_args(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--episodes", type=int, default=100)
    sp.add_argument("--policy", choices=["config", "greedy", "sample"], default="config")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("regretlab", help="tabular option-set study, CSV on stdout")
    run_args(sp, config_required=False)
    sp.add_argument("--n-mdps", type=int, default=10)
    sp.add_argument("--n-calls", type=int, default=200)
    sp.set_defaults(fn=cmd_regretlab)

    sp = sub.add_parser("sweep", help="grid sweep or a named study")
    run_args(sp)
    sp.add_argument("--study", choices=["grid", "growth", "gamma"], default="grid")
    sp.add_argument("--grid", action="append", default=[], metavar="KEY=[V1,V2]")
    sp.add_argument("--seeds", type=int, default=5, help="seeds 0..N-1 for named studies")
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("plot", help="SVG plots from metrics JSONL or results CSV")
    sp.add_argument("--out", required=True)
    sp.add_argument("--curves", action="append", metavar="LABEL=GLOB", help="metrics.jsonl files, one per seed")
    sp.add_argument("--milestones", action="append", metavar="LABEL=GLOB")
    sp.add_argument("--kind", default="update", choices=["update", "eval"])
    sp.add_argument("--key", default="return_mean")
    sp.add_argument("--table", help="CSV with one row per seed")
    sp.add_argument("--x", default="n")
    sp.add_argument("--y", default="final_return")
    sp.add_argument("--group", default="method")
    sp.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ContractViolation as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
