"""Command-line front end: build a model, warm-start, solve, report.

Exit codes: 0 solved, 2 bad flags or parameters, 3 unreadable input,
4 solver did not reach the tolerance.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import models
from .loaders import DatasetError, load_returns_csv, load_svmlight, report_to_json
from .pmm import PenaltySchedule, SolveReport, Status
from .problem import ProblemValidationError, load_problem_json
from .solver import WARMSTART_CHOICES, solve

__all__ = ["build_parser", "run_cli", "main"]

EXIT_OK, EXIT_USAGE, EXIT_LOAD, EXIT_NOT_SOLVED = 0, 2, 3, 4

# Per-model fallbacks for flags left unset (portfolio and quantile runs
# use different alpha/tau grids).
DEFAULTS = {
    "cvar": {"alpha": 0.05, "tau": 1e-2},
    "masd": {"tau": 1e-2},
    "quantile": {"alpha": 0.8, "tau": 0.5, "lam": 1e-2},
    "svm": {"lam": 1e-2, "tau1": 0.5, "tau2": 0.5},
    "raw": {},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep argparse's exit status but make it catchable
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pwlqp", description="Active-set solver for convex QPs with piecewise-linear terms.")
    ap.add_argument("--model", required=True, choices=sorted(DEFAULTS))
    ap.add_argument("--data", help="CSV returns, svmlight file or JSON problem; synthetic data when omitted")
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--lambda", dest="lam", type=float)
    ap.add_argument("--tau", type=float)
    ap.add_argument("--tau1", type=float)
    ap.add_argument("--tau2", type=float)
    ap.add_argument("--a-lower", type=float, default=models.DEFAULT_LOWER, help="asset lower bound (portfolios)")
    ap.add_argument("--a-upper", type=float, default=models.DEFAULT_UPPER, help="asset upper bound (portfolios)")
    ap.add_argument("--tol", type=float, default=1e-5)
    ap.add_argument("--max-outer", type=int, default=200)
    ap.add_argument("--max-inner", type=int, default=20)
    ap.add_argument("--warmstart", choices=WARMSTART_CHOICES, default="auto")
    ap.add_argument("--output", choices=("text", "json"), default="text")
    ap.add_argument("--seed", type=int, default=0, help="seed for synthetic data")
    ap.add_argument("--solution", help="write the primal solution x to this JSON file")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _param(args, name):
    v = getattr(args, name)
    return DEFAULTS[args.model].get(name) if v is None else v


def _build(args):
    """Return the ProblemData for the requested model; may raise DatasetError."""
    kind = args.model
    if kind == "raw":
        if not args.data:
            raise ValueError("--model raw needs --data PROBLEM.json")
        return load_problem_json(args.data)
    if kind in ("cvar", "masd"):
        ds = load_returns_csv(args.data) if args.data else models.synthetic_returns(seed=args.seed)
        if kind == "cvar":
            return models.build_cvar(ds, _param(args, "alpha"), _param(args, "tau"), args.a_lower, args.a_upper)
        return models.build_masd(ds, _param(args, "tau"), args.a_lower, args.a_upper)
    svm = kind == "svm"
    if args.data:
        ds = load_svmlight(args.data, target="svm" if svm else "regression")
    else:
        ds = models.synthetic_labeled(seed=args.seed, classification=svm)
    if svm:
        return models.build_svm(ds, _param(args, "lam"), _param(args, "tau1"), _param(args, "tau2"))
    return models.build_quantile(ds, _param(args, "alpha"), _param(args, "lam"), _param(args, "tau"))


def _text_report(args, report: SolveReport) -> str:
    res = ", ".join(f"{r:.2e}" for r in report.residuals)
    lines = [
        f"model        {args.model}",
        f"status       {report.status}",
        f"objective    {report.objective:.10g}",
        f"PMM(SSN)[Fact.]  {report.iteration_triple()}",
        f"warm start   {report.warmstart_iters} pADMM iterations",
        f"residuals    {res}",
        f"active sets  |B_g1|={report.active_set_sizes[0]}  |N_g2|={report.active_set_sizes[1]}",
        f"time         {report.wall_time_s:.3f} s",
    ]
    if report.message:
        lines.append(f"note         {report.message}")
    return "\n".join(lines)


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.tol <= 0 or args.max_outer < 0 or args.max_inner < 1:
        print("pwlqp: error: need --tol > 0, --max-outer >= 0 and --max-inner >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        p = _build(args)
    except (DatasetError, ProblemValidationError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"pwlqp: cannot load input: {exc}", file=sys.stderr)
        return EXIT_LOAD
    except ValueError as exc:  # parameter out of range
        print(f"pwlqp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    sched = PenaltySchedule(max_outer=args.max_outer, max_inner=args.max_inner)
    it, report = solve(p, tol=args.tol, warmstart=args.warmstart, schedule=sched)

    if args.output == "json":
        print(report_to_json(report))
    else:
        print(_text_report(args, report))
    if args.solution:
        with open(args.solution, "w") as fh:
            json.dump({"x": np.asarray(it.x).tolist()}, fh)
    return EXIT_OK if report.status == Status.OPTIMAL else EXIT_NOT_SOLVED


def main() -> None:
    sys.exit(run_cli())
