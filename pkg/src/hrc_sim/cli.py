"""Command-line entry point: ``hrc-sim {run,sweep,gci,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import analytic
from .config import ConfigError, SweepConfig, defaults_yaml, parse_config, resolve_seed
from .engine import DeadlockError
from .experiments import (
    Scenario,
    SweepTable,
    grid_spec,
    merge,
    run_sweep,
    simulated_gci,
    write_failures,
    write_reports,
)
from .metrics import METRICS_COLUMNS, compute_metrics, export_gantt, metrics_row, write_csv
from .simulation import run as simulate

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _load(args) -> "SimConfig":  # noqa: F821
    return parse_config(args.config, args.overrides)


def cmd_run(args) -> int:
    cfg = _load(args)
    seed = resolve_seed(cfg, args.seed)
    timeline = simulate(cfg, seed=seed)
    m = compute_metrics(timeline)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    teams = cfg.scenario.teams if cfg.scenario.kind == "MRMW" else 1
    row = metrics_row(m, scenario=cfg.scenario.kind, mode=cfg.collaboration.mode, ci=cfg.collaboration.ci_s,
                      sl=cfg.collaboration.sl, teams=teams, replication=0, seed=seed)
    write_csv(out / "metrics.csv", METRICS_COLUMNS, [row])
    if args.gantt:
        export_gantt(timeline, out / "gantt.csv", out / "gantt.svg")
    note = " (time cap reached)" if timeline.truncated else ""
    print(f"makespan {m.makespan:.1f} s{note}")
    print(f"CP {m.cp:.2f} bricks/h")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if cfg.sweep is None:
        cfg = cfg.replace(sweep=SweepConfig().__dict__)
    seed = resolve_seed(cfg, args.seed)
    cfg = cfg.replace(**{"run.master_seed": seed})
    spec = grid_spec(cfg)
    tables = [run_sweep(spec, jobs=args.jobs)]
    if cfg.sweep.scale_teams:
        scaled = grid_spec(cfg, Scenario.mrmw(cfg.sweep.scale_teams, True))
        tables.append(run_sweep(scaled, jobs=args.jobs))
    table = merge(tables)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "metrics.csv")
    failed = write_failures(table, out / "failures.csv") if any(r.failed for r in table.rows) else 0
    print(f"{len(table)} runs written to {out / 'metrics.csv'}" + (f", {failed} failed" if failed else ""))
    for line in write_reports(table, out):
        print(line)
    return EXIT_OK


def cmd_report(args) -> int:
    table = SweepTable.from_csv(args.input)
    for line in write_reports(table, args.out):
        print(line)
    return EXIT_OK


def cmd_gci(args) -> int:
    if args.workers < 1 or args.ci <= 0 or args.samples < 1:
        raise ConfigError(["--workers must be >= 1, --ci > 0 and --samples >= 1"])
    cfg = _load(args)
    seed = resolve_seed(cfg, args.seed)
    model = analytic.GciModel(args.workers, args.ci, "random")
    expected = analytic.expected_gci(model)
    mc = analytic.monte_carlo_gci(model, args.samples, np.random.default_rng(seed))
    print(f"{'method':<12}{'GCI (s)':>12}{'rel. error':>12}")
    print(f"{'expected':<12}{expected:>12.2f}{'':>12}")
    print(f"{'monte-carlo':<12}{mc:>12.2f}{mc / expected - 1:>+12.2%}")
    if args.replications > 0:
        per_robot = simulated_gci(cfg, args.workers, args.ci, args.replications, seed)
        for robot, gci in per_robot.items():
            print(f"{robot:<12}{gci:>12.2f}{gci / expected - 1:>+12.2%}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hrc-sim", description="Human-robot bricklaying simulator")
    parser.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    def common(p, seed_help="master seed (overrides config and HRC_SIM_SEED)"):
        p.add_argument("config", nargs="?", type=Path, help="YAML config (defaults when omitted)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a dotted config key, e.g. collaboration.ci_s=600")
        p.add_argument("--seed", type=int, default=None, help=seed_help)

    p = sub.add_parser("run", help="simulate one configuration")
    common(p)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--gantt", action="store_true", help="also write gantt.csv and gantt.svg")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="CI x SL x mode sweep with reports")
    common(p)
    p.add_argument("--out", default="sweep-out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="concurrent runs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gci", help="expected vs Monte-Carlo vs simulated checking interval")
    common(p)
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--ci", type=float, default=600.0)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--replications", type=int, default=20, help="full-simulation runs (0 skips them)")
    p.set_defaults(func=cmd_gci)

    p = sub.add_parser("report", help="rebuild reports from a metrics CSV")
    p.add_argument("--in", dest="input", type=Path, required=True, help="metrics CSV from a sweep")
    p.add_argument("--out", default="report-out", help="output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.print_defaults:
        sys.stdout.write(defaults_yaml())
        return EXIT_OK
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DeadlockError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
