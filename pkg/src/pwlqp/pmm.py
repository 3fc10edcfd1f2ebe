"""Outer proximal method of multipliers driving the semismooth Newton inner solver."""

from __future__ import annotations

import dataclasses
import logging
import math
import time

import numpy as np

from .linalg import FactorCache, FactorizationError
from .problem import Iterate, ProblemData, objective
from .prox import project_box, prox_g1, prox_g2
from .ssn import SsnContext, inner_distance, ssn_solve

__all__ = [
    "PenaltySchedule",
    "SolveReport",
    "Status",
    "z_update",
    "penalty_update",
    "check_termination",
    "pmm_solve",
]

log = logging.getLogger(__name__)

DUAL_CAP = 1e10


class Status:
    OPTIMAL = "optimal"
    MAX_ITER = "max-iter"
    INFEASIBLE = "suspected-infeasible"
    NUMERICAL = "numerical-error"


@dataclasses.dataclass
class PenaltySchedule:
    beta0: float = 10.0
    beta_inf: float = 1e8
    rho0: float = 50.0
    beta_growth: float = 5.0
    tau_inf: float = 0.2
    eps0: float = 1.0
    eps_decay: float = 0.5
    stall_factor: float = 0.95
    anchor_fraction: float = 0.1
    zeta: float | None = 1.0  # None: min(1, 1/beta)
    heuristic_first_step: bool = False
    max_outer: int = 200
    max_inner: int = 20

    def tau(self, k: int) -> float:
        """Constant tau_k = beta0 / rho0, floored at tau_inf."""
        return max(self.beta0 / self.rho0, self.tau_inf)

    def zeta_for(self, beta: float) -> float:
        return self.zeta if self.zeta is not None else min(1.0, 1.0 / beta)

    def rho(self, beta: float, k: int) -> float:
        return beta / self.tau(k)

    def eps_inner(self, k: int, tol: float, anchor_distance: float = math.inf) -> float:
        """Geometric schedule floored at 0.1*tol, and never looser than a
        fraction of the distance already achieved at the anchor."""
        eps = min(self.eps0 * self.eps_decay**k, self.anchor_fraction * anchor_distance)
        return max(eps, 0.1 * tol)


@dataclasses.dataclass
class SolveReport:
    status: str = Status.MAX_ITER
    outer_iters: int = 0
    inner_iters_total: int = 0
    factorizations: int = 0
    residuals: tuple[float, float, float, float] = (math.inf,) * 4
    objective: float = math.inf
    wall_time_s: float = 0.0
    active_set_sizes: tuple[int, int] = (0, 0)
    warmstart_iters: int = 0
    message: str = ""

    def iteration_triple(self) -> str:
        return f"{self.outer_iters}({self.inner_iters_total})[{self.factorizations}]"

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["residuals"] = list(self.residuals)
        out["active_set_sizes"] = list(self.active_set_sizes)
        out["iterations"] = self.iteration_triple()
        return out


def z_update(z_k, x_next, beta: float, a_l, a_u) -> np.ndarray:
    return (z_k + beta * x_next) - beta * project_box(z_k / beta + x_next, a_l, a_u)


def penalty_update(
    sched: PenaltySchedule, k: int, beta: float, progress: tuple[float, float]
) -> tuple[float, float]:
    """Grow beta when the residual ``progress = (previous, current)`` stalled.

    Returns (beta_{k+1}, rho_{k+1}) with rho = beta / tau.
    """
    previous, current = progress
    if not current <= sched.stall_factor * previous:
        beta = min(sched.beta_growth * beta, sched.beta_inf)
    return beta, sched.rho(beta, k + 1)


def check_termination(
    p: ProblemData, it: Iterate, tol: float
) -> tuple[bool, tuple[float, float, float, float]]:
    """Normalized optimality residuals of the original problem (unit prox parameter)."""
    x, w, y, z = it.x, it.w, it.y, it.z
    yC, yA = y[: p.l], y[p.l :]
    grad = p.c + p.Q @ x - p.C.T @ yC - p.A.T @ yA + z
    r1 = np.linalg.norm(x - prox_g1(x - grad, 1.0, p.D_diag)) / (1.0 + _inf_norm(p.c))
    r2 = np.linalg.norm(w - prox_g2(w - yC, 1.0))
    feas = np.concatenate([p.C @ x + p.d - w, p.A @ x - p.b])
    r3 = np.linalg.norm(feas) / (1.0 + _inf_norm(p.b) + _inf_norm(p.d))
    r4 = np.linalg.norm(x - project_box(x + z, p.a_l, p.a_u)) / (
        1.0 + _inf_norm(x) + _inf_norm(z)
    )
    res = (float(r1), float(r2), float(r3), float(r4))
    return all(r <= tol for r in res), res


def _inf_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _report_objective(p: ProblemData, x: np.ndarray) -> float:
    xk = p.project(x)
    return objective(p, xk, p.C @ xk + p.d)


def pmm_solve(
    p: ProblemData,
    start: Iterate | None = None,
    sched: PenaltySchedule | None = None,
    tol: float = 1e-5,
    *,
    callback=None,
) -> tuple[Iterate, SolveReport]:
    """Solve ``p`` until the normalized residuals reach ``tol``.

    ``callback(k, iterate, ssn_stats, residuals)`` is invoked after every
    outer iteration when given.
    """
    sched = sched or PenaltySchedule()
    t0 = time.perf_counter()
    it = start.copy() if start is not None else Iterate.zeros(p)
    if not it.matches(p):
        raise ValueError("starting iterate does not match the problem dimensions")
    report = SolveReport()
    cache = FactorCache()
    beta = sched.beta0
    rho = sched.rho0

    done, res = check_termination(p, it, tol)
    best, best_res = it.copy(), res
    prev = max(res)
    k = 0
    status = Status.OPTIMAL if done else Status.MAX_ITER
    while not done and k < sched.max_outer:
        ctx = SsnContext.from_anchor(
            p, it, beta, rho, 1.0, zeta=sched.zeta_for(beta),
            max_inner=sched.max_inner,
            heuristic_first_step=sched.heuristic_first_step,
        )
        ctx.eps_inner = sched.eps_inner(k, tol, inner_distance(ctx, it.x, it.w, it.y))
        try:
            nxt, stats = ssn_solve(ctx, it, cache)
        except FactorizationError as exc:
            status = Status.NUMERICAL
            report.message = str(exc)
            log.warning("factorization breakdown at outer iteration %d: %s", k, exc)
            break
        report.inner_iters_total += stats.iterations
        report.factorizations += stats.factorizations
        report.active_set_sizes = (stats.n_free, stats.n_kink_rows)
        nxt.z = z_update(it.z, nxt.x, beta, p.a_l, p.a_u)
        k += 1
        if not nxt.is_finite():
            status = Status.NUMERICAL
            report.message = "non-finite iterate"
            break
        it = nxt
        done, res = check_termination(p, it, tol)
        if callback is not None:
            callback(k, it, stats, res)
        if max(res) <= max(best_res):
            best, best_res = it.copy(), res
        if done:
            status = Status.OPTIMAL
            break
        if max(_inf_norm(it.y), _inf_norm(it.z)) > DUAL_CAP:
            status = Status.INFEASIBLE
            report.message = "dual estimates exceeded the safeguard bound"
            break
        # A failed inner solve says the sub-problem is already too stiff for
        # Newton; raising beta would only make it stiffer.
        if stats.converged:
            beta, rho = penalty_update(sched, k, beta, (prev, max(res)))
        prev = max(res)
        log.debug("outer %d: res=%s beta=%.3g inner=%d", k, res, beta, stats.iterations)

    if status != Status.OPTIMAL:
        it, res = (best, best_res) if status == Status.MAX_ITER else (it, res)
    report.status = status
    report.outer_iters = k
    report.residuals = res
    report.objective = _report_objective(p, it.x) if it.is_finite() else math.nan
    report.wall_time_s = time.perf_counter() - t0
    return it, report
