"""Semismooth Newton inner solver for the proximal augmented Lagrangian sub-problems.

Given the outer anchor (x_k, y_k, z_k) and penalties (beta, rho), the inner
problem is the nonsmooth equation M_hat(x, w, y) = 0 with

    M_hat = [ (x, w) - prox_{zeta g}((x, w) - zeta r(x, y)) ]
            [ zeta ( [C; A] x + [d; -b] - [I; 0] w + (y - y_k) / beta ) ]

Each Newton step eliminates the variables pinned by the generalized Jacobian
(inactive x's, dual components of plus-part rows outside the kink band, w on
rows inside it) and solves the remaining quasi-definite saddle-point system.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.sparse as sp

from .linalg import FactorCache, SaddleSystem, make_signature, solve
from .problem import Iterate, ProblemData
from .prox import (
    project_box,
    project_subdiff_g,
    prox_g1,
    prox_g2,
    select_B_delta,
    select_B_g1,
    select_B_g2,
)

__all__ = [
    "SsnContext",
    "ActiveSets",
    "EliminationRecord",
    "LineSearchResult",
    "StepRecord",
    "SsnStats",
    "residual_r",
    "residual_Mhat",
    "merit",
    "inner_distance",
    "build_active_sets",
    "assemble_reduced",
    "recover_eliminated",
    "newton_direction",
    "line_search",
    "ssn_solve",
]


@dataclasses.dataclass
class SsnContext:
    problem: ProblemData
    x_k: np.ndarray
    y_k: np.ndarray
    z_k: np.ndarray
    beta: float
    rho: float
    zeta: float
    eps_inner: float
    mu: float = 1e-4
    delta_ls: float = 0.5
    max_inner: int = 20
    m_max: int = 40
    heuristic_first_step: bool = False

    def __post_init__(self) -> None:
        if not 0 < self.mu < 0.5:
            raise ValueError(f"mu must lie in (0, 1/2), got {self.mu}")
        if not 0 < self.delta_ls < 1:
            raise ValueError(f"delta_ls must lie in (0, 1), got {self.delta_ls}")
        if min(self.beta, self.rho, self.zeta, self.eps_inner) <= 0:
            raise ValueError("penalties and the inner tolerance must be positive")

    @classmethod
    def from_anchor(
        cls,
        p: ProblemData,
        anchor: Iterate,
        beta: float,
        rho: float,
        eps_inner: float,
        zeta: float | None = None,
        **kwargs,
    ) -> "SsnContext":
        if zeta is None:
            zeta = min(1.0, 1.0 / beta)
        return cls(p, anchor.x, anchor.y, anchor.z, beta, rho, zeta, eps_inner, **kwargs)


@dataclasses.dataclass
class ActiveSets:
    """Boolean masks: ``b_g1`` marks free x's, ``b_g2`` rows with pinned duals."""

    b_g1: np.ndarray
    b_g2: np.ndarray
    b_delta: np.ndarray

    @property
    def B_g1(self) -> np.ndarray:
        return np.flatnonzero(self.b_g1)

    @property
    def N_g1(self) -> np.ndarray:
        return np.flatnonzero(~self.b_g1)

    @property
    def B_g2(self) -> np.ndarray:
        return np.flatnonzero(self.b_g2)

    @property
    def N_g2(self) -> np.ndarray:
        return np.flatnonzero(~self.b_g2)


@dataclasses.dataclass
class EliminationRecord:
    sets: ActiveSets
    dx_N: np.ndarray  # (d_x) on N_g1
    dy_B: np.ndarray  # (d_y) on B_g2
    dw_N: np.ndarray  # (d_w) on N_g2
    rhs_C: np.ndarray  # -M_hat rows of the C-block, needed for (d_w) on B_g2


@dataclasses.dataclass
class LineSearchResult:
    x: np.ndarray
    w: np.ndarray
    y: np.ndarray
    m: int
    theta: float
    accepted: bool


@dataclasses.dataclass(frozen=True)
class StepRecord:
    theta_old: float
    theta_new: float
    m: int
    heuristic: bool


@dataclasses.dataclass
class SsnStats:
    iterations: int = 0
    factorizations: int = 0
    converged: bool = False
    line_search_failed: bool = False
    distance: float = np.inf
    n_free: int = 0  # |B_g1| of the last Newton system
    n_kink_rows: int = 0  # |N_g2| of the last Newton system
    steps: list[StepRecord] = dataclasses.field(default_factory=list)


def residual_r(ctx: SsnContext, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    p = ctx.problem
    yC, yA = y[: p.l], y[p.l :]
    shifted = ctx.z_k / ctx.beta + x
    top = (
        p.c
        + p.Q @ x
        - p.C.T @ yC
        - p.A.T @ yA
        + (ctx.z_k + ctx.beta * x)
        - ctx.beta * project_box(shifted, p.a_l, p.a_u)
        + (x - ctx.x_k) / ctx.rho
    )
    return np.concatenate([top, yC])


def _feasibility(ctx: SsnContext, x: np.ndarray, w: np.ndarray, y: np.ndarray) -> np.ndarray:
    p = ctx.problem
    return np.concatenate([p.C @ x + p.d - w, p.A @ x - p.b]) + (y - ctx.y_k) / ctx.beta


def _evaluate(ctx: SsnContext, x, w, y) -> tuple[np.ndarray, np.ndarray]:
    p = ctx.problem
    r = residual_r(ctx, x, y)
    zeta = ctx.zeta
    top_x = x - prox_g1(x - zeta * r[: p.n], zeta, p.D_diag)
    top_w = w - prox_g2(w - zeta * y[: p.l], zeta)
    return r, np.concatenate([top_x, top_w, zeta * _feasibility(ctx, x, w, y)])


def residual_Mhat(ctx: SsnContext, x: np.ndarray, w: np.ndarray, y: np.ndarray) -> np.ndarray:
    return _evaluate(ctx, x, w, y)[1]


def merit(ctx: SsnContext, x: np.ndarray, w: np.ndarray, y: np.ndarray) -> float:
    v = residual_Mhat(ctx, x, w, y)
    return float(v @ v)


def inner_distance(ctx: SsnContext, x: np.ndarray, w: np.ndarray, y: np.ndarray) -> float:
    """Distance from the origin to the sub-problem optimality set at (x, w, y)."""
    r = residual_r(ctx, x, y)
    top = r + project_subdiff_g(x, w, -r, ctx.problem.D_diag)
    return float(np.sqrt(top @ top + np.sum(_feasibility(ctx, x, w, y) ** 2)))


def build_active_sets(
    ctx: SsnContext, x: np.ndarray, w: np.ndarray, y: np.ndarray, r: np.ndarray | None = None
) -> ActiveSets:
    p = ctx.problem
    if r is None:
        r = residual_r(ctx, x, y)
    u_hat = x - ctx.zeta * r[: p.n]
    return ActiveSets(
        b_g1=select_B_g1(u_hat, ctx.zeta, p.D_diag) > 0.5,
        b_g2=select_B_g2(w, y[: p.l], ctx.zeta) > 0.5,
        b_delta=select_B_delta(ctx.z_k, x, ctx.beta, p.a_l, p.a_u),
    )


def assemble_reduced(
    ctx: SsnContext,
    sets: ActiveSets,
    x: np.ndarray,
    w: np.ndarray,
    y: np.ndarray,
    mhat: np.ndarray | None = None,
) -> tuple[SaddleSystem, np.ndarray, EliminationRecord]:
    """Eliminate pinned unknowns and build the reduced saddle-point system.

    Unknowns of the reduced system are (d_x on B_g1, d_y on N_g2, d_y on the
    A-rows).  The right-hand side follows from substituting the eliminated
    components into the full Newton system.
    """
    p = ctx.problem
    n, l = p.n, p.l
    if sets.b_g1.shape != (n,) or sets.b_g2.shape != (l,):
        raise ValueError("active sets do not match the problem dimensions")
    if mhat is None:
        mhat = residual_Mhat(ctx, x, w, y)
    rhs_full = -mhat
    Rx, Rw = rhs_full[:n], rhs_full[n : n + l]
    RyC, RyA = rhs_full[n + l : n + 2 * l], rhs_full[n + 2 * l :]
    zeta, beta, rho = ctx.zeta, ctx.beta, ctx.rho
    B1, N1, B2, N2 = sets.B_g1, sets.N_g1, sets.B_g2, sets.N_g2

    dx_N = Rx[N1]
    dy_B = Rw[B2] / zeta
    dw_N = Rw[N2]
    dx_pinned = np.zeros(n)
    dx_pinned[N1] = dx_N

    Q_r = p.Q.tocsr() if not p.Q_is_diagonal else None
    h_diag = beta * (1.0 - sets.b_delta[B1]) + 1.0 / rho
    if Q_r is None:
        H_red = sp.diags(-(h_diag + p.Q_diag[B1]), format="csc")
    else:
        H_red = -(Q_r[B1][:, B1] + sp.diags(h_diag)).tocsc()
    C_N = p.C_csr[N2]
    E = sp.vstack([C_N[:, B1], p.A_csr[:, B1]], format="csr")

    rhs1 = -Rx[B1] / zeta + (p.Q @ dx_pinned)[B1] - (p.C_csr[B2].T @ dy_B)[B1]
    rhs2 = RyC[N2] / zeta - C_N @ dx_pinned + dw_N
    rhs3 = RyA / zeta - p.A @ dx_pinned

    signature = make_signature(
        sets.b_g1, sets.b_g2, sets.b_delta[B1], float(beta), float(zeta), float(rho)
    )
    system = SaddleSystem(H_red=H_red, E=E, reg=1.0 / beta, signature=signature)
    record = EliminationRecord(sets=sets, dx_N=dx_N, dy_B=dy_B, dw_N=dw_N, rhs_C=RyC)
    return system, np.concatenate([rhs1, rhs2, rhs3]), record


def recover_eliminated(
    record: EliminationRecord,
    dx_B: np.ndarray,
    dy_red: np.ndarray,
    ctx: SsnContext,
    x: np.ndarray | None = None,
    w: np.ndarray | None = None,
    y: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assemble the full direction (d_x, d_w, d_y) from the reduced solution.

    The point (x, w, y) enters only through the stored right-hand side, so it
    is accepted for interface symmetry but not needed.
    """
    p = ctx.problem
    sets = record.sets
    B1, N1, B2, N2 = sets.B_g1, sets.N_g1, sets.B_g2, sets.N_g2
    dx = np.empty(p.n)
    dx[N1] = record.dx_N
    dx[B1] = dx_B
    dy = np.empty(p.l + p.m)
    dy[B2] = record.dy_B
    dy[N2] = dy_red[: N2.size]
    dy[p.l :] = dy_red[N2.size :]
    dw = np.empty(p.l)
    dw[N2] = record.dw_N
    dw[B2] = p.C_csr[B2] @ dx + dy[B2] / ctx.beta - record.rhs_C[B2] / ctx.zeta
    return dx, dw, dy


def newton_direction(
    ctx: SsnContext,
    x: np.ndarray,
    w: np.ndarray,
    y: np.ndarray,
    cache: FactorCache | None = None,
) -> tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ActiveSets, bool]:
    """Compute one Newton direction; returns (direction, sets, fresh_factorization)."""
    r, mhat = _evaluate(ctx, x, w, y)
    sets = build_active_sets(ctx, x, w, y, r=r)
    system, rhs, record = assemble_reduced(ctx, sets, x, w, y, mhat=mhat)
    cache = cache if cache is not None else FactorCache()
    fac, fresh = cache.get_or_factorize(system)
    sol = solve(fac, rhs)
    nb = sets.B_g1.size
    return recover_eliminated(record, sol[:nb], sol[nb:], ctx), sets, fresh


def line_search(
    ctx: SsnContext,
    point: tuple[np.ndarray, np.ndarray, np.ndarray],
    direction: tuple[np.ndarray, np.ndarray, np.ndarray],
    theta0: float | None = None,
    heuristic: bool = False,
) -> LineSearchResult:
    """Backtrack until Theta(new) <= (1 - 2 mu delta^m) Theta(old).

    With ``heuristic=True`` the unit step is taken without testing.
    """
    x, w, y = point
    dx, dw, dy = direction
    if theta0 is None:
        theta0 = merit(ctx, x, w, y)
    for m in range(ctx.m_max + 1):
        a = ctx.delta_ls**m
        xn, wn, yn = x + a * dx, w + a * dw, y + a * dy
        theta = merit(ctx, xn, wn, yn)
        if heuristic or theta <= (1.0 - 2.0 * ctx.mu * a) * theta0:
            return LineSearchResult(xn, wn, yn, m, theta, True)
    return LineSearchResult(x, w, y, ctx.m_max, theta0, False)


def ssn_solve(
    ctx: SsnContext,
    start: Iterate | tuple[np.ndarray, np.ndarray, np.ndarray],
    cache: FactorCache | None = None,
) -> tuple[Iterate, SsnStats]:
    """Run semismooth Newton from ``start`` until the sub-problem distance is <= eps_inner.

    The returned Iterate carries the anchor's z (the outer loop updates it).
    """
    if isinstance(start, Iterate):
        x, w, y = start.x.copy(), start.w.copy(), start.y.copy()
    else:
        x, w, y = (np.array(v, dtype=float) for v in start)
    cache = cache if cache is not None else FactorCache()
    stats = SsnStats()
    for j in range(ctx.max_inner + 1):
        stats.distance = inner_distance(ctx, x, w, y)
        if stats.distance <= ctx.eps_inner:
            stats.converged = True
            break
        if j == ctx.max_inner:
            break
        r, mhat = _evaluate(ctx, x, w, y)
        theta0 = float(mhat @ mhat)
        sets = build_active_sets(ctx, x, w, y, r=r)
        system, rhs, record = assemble_reduced(ctx, sets, x, w, y, mhat=mhat)
        fac, fresh = cache.get_or_factorize(system)
        stats.factorizations += int(fresh)
        stats.n_free, stats.n_kink_rows = sets.B_g1.size, sets.N_g2.size
        sol = solve(fac, rhs)
        nb = sets.B_g1.size
        direction = recover_eliminated(record, sol[:nb], sol[nb:], ctx)
        ls = line_search(ctx, (x, w, y), direction, theta0=theta0, heuristic=(j == 0 and ctx.heuristic_first_step))
        stats.iterations += 1
        if not ls.accepted:
            stats.line_search_failed = True
            break
        stats.steps.append(StepRecord(theta0, ls.theta, ls.m, j == 0 and ctx.heuristic_first_step))
        x, w, y = ls.x, ls.w, ls.y
    return Iterate(x, w, y, np.array(ctx.z_k, copy=True)), stats
