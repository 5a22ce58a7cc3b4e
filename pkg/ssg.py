"""
Switching subgradient command line
==================================

Runs solvers, near-stationarity measurements, experiment grids, plots,
constant reports and property self-tests from one JSON configuration.

Usage:
    python ssg.py solve --config configs/synthetic.json
    python ssg.py evaluate-stationarity --config configs/synthetic.json --point 0.5,0.1
    python ssg.py experiment --config configs/dp_compas.json --threads 4
    python ssg.py plot --from results/dp_compas --dataset compas --x-axis "cpu time"
    python ssg.py constants --config configs/roc_compas.json
    python ssg.py selftest

Requirements:
    - numpy, scipy, pandas, scikit-learn, matplotlib, python-dotenv installed
    - libsvm datasets under SSG_DATA_DIR (see .env.example) for dp/roc configs

Exit status is 0 on success and 1 on any library error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from core import SSGError, summarize_checks
from harness import (
    Cell,
    build_problem,
    emit_plots,
    execute_cell,
    expand_cells,
    load_config,
    run_experiment,
    run_selftest,
    write_metrics,
)
from schedules import constant_report
from stationarity import default_rho_hat, near_stationarity

BANNER = "=" * 70


def _banner(title: str):
    print(BANNER)
    print(title)
    print(BANNER)


def _parse_point(text: str, dimension: int) -> np.ndarray:
    if text.endswith(".npy"):
        return np.load(text).reshape(-1)
    values = [float(v) for v in text.split(",") if v.strip()]
    if len(values) != dimension:
        raise SystemExit(f"✗ --point has {len(values)} entries, problem dimension is {dimension}")
    return np.asarray(values)


# ============================================================================
# Commands
# ============================================================================

def cmd_solve(args) -> int:
    config = load_config(args.config, seed=args.seed, output_dir=args.out)
    _banner(f"SOLVE: {config.name}")

    print("Step 1: Building problem...")
    built = build_problem(config.problem, config.seed)
    print(f"   {built.problem.name}: dimension {built.problem.dimension}")

    print("\nStep 2: Running first grid cell...")
    cells: List[Cell] = expand_cells(config)
    if args.label:
        cells = [c for c in cells if c.solver.label == args.label]
        if not cells:
            print(f"✗ No solver labelled '{args.label}'")
            return 1
    cell = cells[0]
    print(f"   {cell.run_id}: {cell.solver.method} {cell.params_json}")
    result = execute_cell(config, built, cell)
    if result.status != "ok":
        print(f"✗ {result.error}")
        return 1

    print("\nStep 3: Saving metrics...")
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = write_metrics(result.metrics, out / f"{cell.run_id}.csv")
    print(f"   Saved {path} ({len(result.metrics)} rows)")

    print("\n" + BANNER)
    print(f"✓ final objective     {result.final_objective:.6g}")
    print(f"✓ final infeasibility {result.final_infeasibility:.6g}")
    print(BANNER)
    return 0


def cmd_evaluate_stationarity(args) -> int:
    config = load_config(args.config, seed=args.seed, output_dir=args.out)
    built = build_problem(config.problem, config.seed)
    problem = built.problem
    x = built.x0 if args.point is None else _parse_point(args.point, problem.dimension)
    settings = config.stationarity
    _banner(f"NEAR-STATIONARITY: {problem.name}")
    report = near_stationarity(problem, x, rho_hat=settings.rho_hat, rho_tilde=settings.rho_tilde,
                               inner_iters=settings.inner_iters)
    print(f"   ||x_hat - x||      {report.distance:.6g}")
    print(f"   lambda estimate    {report.multiplier_estimate:.6g}")
    print(f"   KKT residual       {report.kkt_residual:.6g}")
    print(f"   complementarity    {report.complementarity:.6g}")
    print(f"   refinement delta   {100 * report.refinement_delta:.3f}%  "
          f"({report.inner_iters_used} inner iterations)")
    mark = "✗ flagged: refinement changed by 1% or more" if report.flagged else "✓ refinement within 1%"
    print(f"\n{mark}")
    return 0


def cmd_experiment(args) -> int:
    config = load_config(args.config, seed=args.seed, output_dir=args.out)
    _banner(f"EXPERIMENT: {config.name}")
    print(f"Step 1: Running {len(expand_cells(config))} runs with {args.threads} thread(s)...")
    result = run_experiment(config, threads=args.threads)

    summary = result.summary
    print(f"\nStep 2: Saved {len(result.run_paths)} run CSVs and {result.summary_path}")
    for _, row in summary.iterrows():
        mark = "✓" if row["status"] == "ok" else "✗"
        detail = f"f={row['final_objective']:.6g}" if row["status"] == "ok" else row["error"]
        star = "  <- winner" if row["winner"] else ""
        print(f"   {mark} {row['run_id']}: {detail}{star}")

    if args.plot and result.run_paths:
        print("\nStep 3: Emitting plots...")
        for path in emit_plots(result.run_paths, result.output_dir, dataset=config.name):
            print(f"   Saved {path}")

    failed = int((summary["status"] != "ok").sum())
    print("\n" + BANNER)
    print(f"{'✓' if failed == 0 else '✗'} {len(summary) - failed} ok, {failed} failed")
    print(BANNER)
    return 0


def cmd_plot(args) -> int:
    paths = [Path(p) for p in args.runs]
    if args.from_dir:
        paths += sorted(p for p in Path(args.from_dir).glob("*.csv") if p.name != "summary.csv")
    out = args.out or (args.from_dir or ".")
    _banner("PLOTS")
    for path in emit_plots(paths, out, dataset=args.dataset, x_axis=args.x_axis, log_y=args.log_y):
        print(f"   ✓ {path}")
    return 0


def cmd_constants(args) -> int:
    config = load_config(args.config, seed=args.seed, output_dir=args.out)
    problem = build_problem(config.problem, config.seed).problem
    c = problem.constants
    rho_hat = args.rho_hat if args.rho_hat is not None else default_rho_hat(problem)
    report = constant_report(c.M, c.rho, rho_hat, D=c.D, g_feas=c.g_feas_value, theta=c.theta)
    _banner(f"CONSTANTS: {problem.name} (rho_hat={rho_hat:g})")
    for name, value in report.as_dict().items():
        print(f"   {name:<28} {'-' if value is None else f'{value:.6g}'}")
    return 0


def cmd_selftest(args) -> int:
    _banner("SELF TEST")
    checks = run_selftest(seed=args.seed or 0)
    for check in checks:
        mark = "✓" if check.passed else "✗"
        print(f"   {mark} {check.name:<40} worst {check.worst:.3g} ({check.samples} samples)")
    ok = summarize_checks(checks)
    print("\n" + BANNER)
    print("✓ all property checks passed" if ok else "✗ some property checks failed")
    print(BANNER)
    return 0 if ok else 1


# ============================================================================
# Entry point
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssg.py", description="Switching subgradient solvers and experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=1, help="concurrent grid cells")
    common.add_argument("--verbose", "-v", action="count", default=0)

    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", parents=[common], help="run one grid cell")
    solve.add_argument("--config", required=True)
    solve.add_argument("--label", default=None, help="solver label to run (default: first)")
    solve.set_defaults(handler=cmd_solve)

    evaluate = sub.add_parser("evaluate-stationarity", parents=[common], help="measure ||x_hat(x) - x||")
    evaluate.add_argument("--config", required=True)
    evaluate.add_argument("--point", default=None, help="comma-separated coordinates or a .npy file")
    evaluate.set_defaults(handler=cmd_evaluate_stationarity)

    experiment = sub.add_parser("experiment", parents=[common], help="run every grid cell and seed")
    experiment.add_argument("--config", required=True)
    experiment.add_argument("--plot", action="store_true", help="emit SVGs when done")
    experiment.set_defaults(handler=cmd_experiment)

    plot = sub.add_parser("plot", parents=[common], help="emit SVGs from run CSVs")
    plot.add_argument("runs", nargs="*", default=[])
    plot.add_argument("--from", dest="from_dir", default=None, help="directory of run CSVs")
    plot.add_argument("--dataset", default="experiment")
    plot.add_argument("--x-axis", default="iteration", choices=["iteration", "cpu time", "cpu_time"])
    plot.add_argument("--log-y", action="store_true")
    plot.set_defaults(handler=cmd_plot)

    constants = sub.add_parser("constants", parents=[common], help="print the constant report")
    constants.add_argument("--config", required=True)
    constants.add_argument("--rho-hat", type=float, default=None)
    constants.set_defaults(handler=cmd_constants)

    selftest = sub.add_parser("selftest", parents=[common], help="run the property suites")
    selftest.set_defaults(handler=cmd_selftest)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except SSGError as err:
        print(f"✗ {type(err).__name__}: {err}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
