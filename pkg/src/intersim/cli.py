"""Command-line entry points: single runs, batch experiments, config checks.

Exit codes: 0 success, 2 configuration/validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .batch import ConditionGrid, emit_outputs, run_batch
from .config import REGIMES, ConfigError, SimConfig, default_yaml, load_config, \
    resolved_lines, validate
from .simulate import run_simulation, write_jsonl

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intersim",
        description="Two-agent intersection interaction simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="YAML config file")
    common.add_argument("--override", action="append", default=[],
                        metavar="K=V", help="section.key=value (repeatable)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="seed override")
    common.add_argument("--no-figures", action="store_true",
                        help="skip PNG rendering")

    p_run = sub.add_parser("run", parents=[common],
                           help="run one simulation and write its trajectory")
    p_run.add_argument("--regime", choices=REGIMES, default=None)
    p_run.add_argument("--debug-particles", action="store_true",
                       help="dump full particle clouds into the log")

    p_batch = sub.add_parser("batch", parents=[common],
                             help="run a repetition grid and emit outcome tables")
    p_batch.add_argument("--regime", choices=REGIMES, default="baseline")
    p_batch.add_argument("--reps", type=int, default=None,
                         help="repetitions per condition")
    p_batch.add_argument("--full", action="store_true",
                         help="use the full repetition count")
    p_batch.add_argument("--jobs", type=int, default=0,
                         help="parallel workers (0 = all cores)")

    p_val = sub.add_parser("validate", parents=[common],
                           help="validate a config and print the resolved values")
    p_val.add_argument("--template", action="store_true",
                       help="print a commented default config template")
    return parser


def _load(args) -> SimConfig:
    if args.config is not None and not os.path.exists(args.config):
        raise ConfigError(f"config file not found: {args.config}")
    cfg = load_config(args.config, args.override)
    if args.seed is not None:
        cfg.scenario.seed = args.seed
    return cfg


def cmd_run(args) -> int:
    try:
        cfg = _load(args)
        if args.regime:
            cfg = cfg.apply_regime(args.regime)
        validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        outcome, log = run_simulation(cfg)
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traj_path = out / "trajectory.jsonl"
    write_jsonl(log, traj_path)
    write_jsonl([{"record": "outcome", **outcome.to_dict()}],
                out / "outcome.json")
    print(f"outcome: {outcome.kind}  t_cross_a={outcome.t_cross_a} "
          f"t_cross_b={outcome.t_cross_b} min_gap={outcome.min_gap:.3f}")
    print(f"trajectory: {traj_path}")
    if not args.no_figures:
        from .report import render_run_figure
        fig = render_run_figure(log, out, cfg.planner.drift_rate)
        print(f"figure: {fig}")
    return EXIT_OK


def cmd_batch(args) -> int:
    try:
        cfg = _load(args)
        validate(cfg)
        reps = args.reps
        if reps is None:
            reps = cfg.batch.full_reps if args.full else cfg.batch.reps
        grid_vals = (cfg.batch.adversarial_grid if args.regime == "adversarial"
                     else cfg.batch.delta_d_grid)
        grid = ConditionGrid(regime=args.regime, delta_d0=tuple(grid_vals),
                             reps=reps)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    jobs = args.jobs if args.jobs > 0 else (os.cpu_count() or 1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        table, raw = run_batch(grid, cfg.scenario.seed, cfg, jobs=jobs)
        paths = emit_outputs(table, raw, out)
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    print(f"regime: {args.regime}  ({reps} reps per condition, {jobs} jobs)")
    for dd0 in table.conditions:
        parts = []
        for kind in ("a_first", "b_first", "deadlock", "collision"):
            p = table.proportion(dd0, kind)
            lo, hi = table.interval(dd0, kind)
            parts.append(f"{kind}={p:.2f} [{lo:.2f},{hi:.2f}]")
        fail = table.failures.get(dd0, 0)
        line = f"  dD0={dd0:+7.1f}: " + "  ".join(parts)
        if fail:
            line += f"  FAILURES={fail}"
        print(line)
    for name, path in paths.items():
        print(f"{name}: {path}")
    n_fail = sum(table.failures.values())
    if not args.no_figures:
        from .report import render_adversarial_figure, render_outcome_figure
        figp = render_outcome_figure(table, out)
        print(f"figure: {figp}")
        if args.regime == "adversarial":
            figp = render_adversarial_figure(table, raw, out)
            print(f"figure: {figp}")
    return EXIT_OK if n_fail == 0 else EXIT_RUNTIME


def cmd_validate(args) -> int:
    if args.template:
        print(default_yaml())
        return EXIT_OK
    try:
        cfg = _load(args)
        validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("configuration OK; resolved parameters:")
    for line in resolved_lines(cfg):
        print("  " + line)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "batch": cmd_batch, "validate": cmd_validate}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
