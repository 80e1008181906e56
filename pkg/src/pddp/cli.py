"""Command line: ``run``, ``validate`` and ``plot``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from pddp.config import ConfigError, load_config


def _run(args) -> int:
    cfg = load_config(args.config)
    if args.scale is not None:
        cfg = cfg.scaled(args.scale)
    if args.seeds:
        cfg = cfg.with_seeds(s for s in args.seeds.split(",") if s.strip())
    from pddp.runner import run_experiment

    out = args.out or cfg.out
    results = run_experiment(cfg, out, plots=not args.no_plots)
    failed = [r for r in results if not r.ok]
    for r in failed:
        print(f"FAILED {r.setting.name} seed {r.seed}: {r.error}", file=sys.stderr)
    print(f"{len(results) - len(failed)}/{len(results)} runs ok; results in {out}")
    return 1 if failed else 0


def _validate(args) -> int:
    cfg = load_config(args.config)
    names = ", ".join(s.name for s in cfg.settings())
    print(f"{cfg.experiment}: T={cfg.horizon}, seeds={list(cfg.seeds)}, settings: {names}")
    return 0


def _plot(args) -> int:
    from pddp.plots import emit_plots, read_records

    src = Path(args.input)
    csv_path = src / "runs.csv" if src.is_dir() else src
    records = read_records(csv_path)
    experiment = "exp6" if any("ucb" in r["setting"] for r in records) else "custom"
    for p in emit_plots(records, args.out or csv_path.parent, experiment=experiment, x_min=args.x_min):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pddp", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", required=True, help="config file or preset name (exp1..exp6, cluster0, cluster1)")
    run.add_argument("--scale", type=float, help="multiply the horizon, e.g. 0.1 for desk scale")
    run.add_argument("--seeds", help="comma-separated seeds overriding the config")
    run.add_argument("--out", help="output directory overriding the config")
    run.add_argument("--no-plots", action="store_true")
    run.set_defaults(func=_run)
    val = sub.add_parser("validate", help="parse and check a config")
    val.add_argument("--config", required=True)
    val.set_defaults(func=_validate)
    plot = sub.add_parser("plot", help="render SVG charts from a runs.csv")
    plot.add_argument("--in", dest="input", required=True, help="results directory or CSV file")
    plot.add_argument("--out", help="directory for the SVG files (default: next to the CSV)")
    plot.add_argument("--x-min", type=float, help="hide rounds before this episode")
    plot.set_defaults(func=_plot)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
