"""One-call solve: optional pADMM warm start followed by PMM with SSN inner solves."""

from __future__ import annotations

import dataclasses
import math
import time

from .pmm import PenaltySchedule, SolveReport, pmm_solve
from .problem import Iterate, ProblemData
from .warmstart import VARIANTS, AdmmConfig, choose_variant, map_to_pmm_start, run_admm

__all__ = ["WARMSTART_CHOICES", "solve"]

WARMSTART_CHOICES = ("auto", *VARIANTS, "none")


def solve(
    p: ProblemData,
    *,
    tol: float = 1e-5,
    warmstart: str = "auto",
    schedule: PenaltySchedule | None = None,
    admm: AdmmConfig | None = None,
    start: Iterate | None = None,
    callback=None,
) -> tuple[Iterate, SolveReport]:
    """Solve ``p`` and return the final iterate with its report.

    ``warmstart`` picks the pADMM variant: "auto" chooses by the fill-in of
    C'C, "none" starts PMM from ``start`` (zeros by default).  The reported
    wall time covers both phases.
    """
    if warmstart not in WARMSTART_CHOICES:
        raise ValueError(f"warmstart must be one of {WARMSTART_CHOICES}, got {warmstart!r}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    t0 = time.perf_counter()
    ws_iters = 0
    if warmstart != "none":
        variant = choose_variant(p) if warmstart == "auto" else warmstart
        cfg = dataclasses.replace(admm or AdmmConfig(), variant=variant)
        result = run_admm(p, cfg)
        ws_iters = result.iterations
        if all(math.isfinite(r) for r in result.residuals):
            start = map_to_pmm_start(p, result.state)
    it, report = pmm_solve(p, start, schedule, tol, callback=callback)
    report.warmstart_iters = ws_iters
    report.wall_time_s = time.perf_counter() - t0
    return it, report
