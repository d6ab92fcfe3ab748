"""
Command Line - Convergence Studies

Subcommands:
- uv-table2     switching cost / mesh convergence, uncertain volatility (bid by default)
- uv-figures    cost, mesh/timestep and method sweeps (plot data)
- mv-unbounded  mean-variance with bankruptcy: control refinement, moments
- mv-bounded    mean-variance without bankruptcy: PCPT, direct, fixed control
- custom        a study from a flat KEY=value config file
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

from core.config import get_settings
from core.errors import PcptError
from core.interpolation import InterpVariant
from evaluation.convergence import parse_cost
from evaluation.run_evaluation import (
    EvaluationReport,
    run_custom,
    run_mv_bounded,
    run_mv_unbounded,
    run_uv_sweeps,
    run_uv_switching,
)
from models.problem import Direction
from solvers.pcpt import MeshStrategy


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(prog="pcpt", description="Convergence studies for HJB solvers")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=settings.out_dir, help="output directory")
    common.add_argument("--levels", type=int, default=None, help="number of ladder levels")
    common.add_argument("--interp", choices=[v.value for v in InterpVariant], default="linear")
    common.add_argument("--routing", choices=["direct", "reference"], default="direct")
    common.add_argument("--cost", default=None, help="c, a fraction like 1/40, or schedule:<kappa>")
    common.add_argument("--policies", type=int, default=None, help="fixed number of controls J")
    common.add_argument("--solver", default=None, help="pcpt | direct | fixed:<q>")
    common.add_argument("--workers", type=int, default=settings.workers)
    common.add_argument("--mesh", choices=[s.value for s in MeshStrategy], default=None,
                        help="shared mesh or one mesh per policy (uv-table2)")
    common.add_argument("--direction", choices=[d.value for d in Direction], default="min",
                        help="bid (min, published) or ask (max) value (uv-table2, uv-figures)")
    common.add_argument("--figures", action="store_true", help="also emit plot data")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("uv-table2", parents=[common], help="switching cost and mesh convergence")
    sub.add_parser("uv-figures", parents=[common], help="cost, mesh and method sweeps")
    sub.add_parser("mv-unbounded", parents=[common])
    sub.add_parser("mv-bounded", parents=[common])
    custom = sub.add_parser("custom", parents=[common])
    custom.add_argument("config", type=Path)
    return parser


def run_command(args: argparse.Namespace) -> EvaluationReport:
    out_dir = args.out / args.command
    interp = InterpVariant(args.interp)
    cost = parse_cost(args.cost) if args.cost is not None else None
    levels = {} if args.levels is None else {"levels": args.levels}

    if args.command == "uv-table2":
        return run_uv_switching(
            out_dir, interp=interp, routing=args.routing,
            costs=[args.cost] if args.cost is not None else None,
            strategy=MeshStrategy(args.mesh) if args.mesh else MeshStrategy.PER_POLICY,
            solver=args.solver or "pcpt", direction=Direction(args.direction),
            workers=args.workers, **levels,
        )
    if args.command == "uv-figures":
        return run_uv_sweeps(out_dir, direction=Direction(args.direction), workers=args.workers, **levels)
    if args.command == "mv-unbounded":
        return run_mv_unbounded(
            out_dir, cost=cost, policies=args.policies, interp=interp, routing=args.routing,
            solver=args.solver or "pcpt", figures=args.figures, workers=args.workers, **levels,
        )
    if args.command == "mv-bounded":
        return run_mv_bounded(
            out_dir, cost=cost, policies=args.policies, interp=interp, routing=args.routing,
            solver=args.solver, figures=args.figures, workers=args.workers, **levels,
        )
    return run_custom(args.config, args.out / args.config.stem, workers=args.workers)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=get_settings().log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    print(f"[Harness] Running {args.command}...")
    start = time.perf_counter()
    try:
        report = run_command(args)
    except PcptError as e:
        print(f"[Harness] Error: {e}", file=sys.stderr)
        return 2

    report.print_summary()
    path = report.save(args.out / (args.command if args.command != "custom" else args.config.stem))
    print(f"[Harness] Results: {path}")
    print(f"[Harness] Done in {time.perf_counter() - start:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
