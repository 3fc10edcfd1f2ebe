"""Proximal ADMM on the splitting reformulation, used to warm-start PMM.

The splitting copies (x, w) into u, so the constraint stack is

    [ C  -I  0 ] [x]   [-d]
    [ A   0  0 ] [w] = [ b]
    [  -I    I ] [u]   [ 0]

and the dual y is laid out as (y_C, y_A, y_ux, y_uw) with lengths
(l, m, n, l).  The u-step is a clamped prox, the (x, w)-step minimizes a
strongly convex quadratic, the y-step is a relaxed multiplier update.
"""

from __future__ import annotations

import dataclasses
import logging
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .problem import Iterate, ProblemData
from .prox import project_box, prox_g1, prox_g2

__all__ = [
    "AdmmConfig",
    "AdmmState",
    "AdmmResult",
    "VARIANTS",
    "admm_u_step",
    "admm_xw_step",
    "admm_y_step",
    "admm_residual",
    "admm_terminate",
    "estimate_sigma_hat",
    "map_to_pmm_start",
    "choose_variant",
    "run_admm",
]

log = logging.getLogger(__name__)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
VARIANTS = ("diagonal", "proxlinear")
# Above this estimated nnz of C'C the normal-equations factor is skipped.
DEFAULT_NNZ_BUDGET = 5_000_000


@dataclasses.dataclass
class AdmmConfig:
    sigma: float = 1.0
    gamma: float = 1.5
    variant: str = "diagonal"
    sigma_hat: float | None = None  # prox-linear only; estimated when None
    r_diag: float = 1e-4  # diagonal-R scale
    max_iter: int = 100
    tol_ws: float = 1e-3

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.gamma < GOLDEN:
            raise ValueError(f"gamma must lie in (0, {GOLDEN:.6f}), got {self.gamma}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.sigma_hat is not None and self.sigma_hat <= 0:
            raise ValueError("sigma_hat must be positive")
        if self.r_diag <= 0:
            raise ValueError("r_diag must be positive")


@dataclasses.dataclass
class AdmmState:
    x: np.ndarray
    w: np.ndarray
    u: np.ndarray
    y: np.ndarray

    @classmethod
    def zeros(cls, p: ProblemData) -> "AdmmState":
        n, l, m = p.n, p.l, p.m
        return cls(np.zeros(n), np.zeros(l), np.zeros(n + l), np.zeros(2 * l + m + n))


@dataclasses.dataclass
class AdmmResult:
    state: AdmmState
    iterations: int
    converged: bool
    residuals: tuple[float, float, float, float]
    variant: str


def _split_y(p: ProblemData, y: np.ndarray):
    l, m, n = p.l, p.m, p.n
    return y[:l], y[l : l + m], y[l + m : l + m + n], y[l + m + n :]


def admm_u_step(p: ProblemData, cfg: AdmmConfig, x, w, y) -> np.ndarray:
    """Clamped prox of g/sigma at (x; w) + y_u/sigma.

    Everything is separable and one-dimensional, so clamping the
    soft-threshold is the exact prox of the l1 term plus the box indicator.
    """
    _, _, y_ux, y_uw = _split_y(p, y)
    s = cfg.sigma
    ux = project_box(prox_g1(x + y_ux / s, 1.0 / s, p.D_diag), p.a_l, p.a_u)
    uw = prox_g2(w + y_uw / s, 1.0 / s)
    return np.concatenate([ux, uw])


def admm_residual(p: ProblemData, x, w, u) -> np.ndarray:
    """M_r [x; w; u] - [-d; b; 0]."""
    n = p.n
    return np.concatenate([p.C @ x - w + p.d, p.A @ x - p.b, u[:n] - x, u[n:] - w])


def _gradient(p: ProblemData, cfg: AdmmConfig, x, w, u, y):
    """Gradient in (x, w) of the augmented Lagrangian at fixed u, y."""
    y_C, y_A, y_ux, y_uw = _split_y(p, y)
    s = cfg.sigma
    res = admm_residual(p, x, w, u)
    l, m, n = p.l, p.m, p.n
    r1, r2, r3, r4 = res[:l], res[l : l + m], res[l + m : l + m + n], res[l + m + n :]
    gx = p.c + p.Q @ x - p.C.T @ (y_C - s * r1) - p.A.T @ (y_A - s * r2) + y_ux - s * r3
    gw = y_C + y_uw - s * (r1 + r4)
    return gx, gw


class _XWSolver:
    """Solves (G + R) v = rhs for the chosen R; G is the (x, w) Hessian."""

    def __init__(self, p: ProblemData, cfg: AdmmConfig):
        self.p, self.cfg = p, cfg
        s = cfg.sigma
        if cfg.variant == "diagonal":
            r = cfg.r_diag
            self.ww = 2.0 * s + r
            CtC = (p.C.T @ p.C).tocsc()
            S = (
                p.Q
                + s * (p.A.T @ p.A)
                + (s - s * s / self.ww) * CtC
                + (s + r) * sp.identity(p.n, format="csc")
            ).tocsc()
            self._solve_S = spla.factorized(S) if p.n else (lambda v: v)
        else:
            sh = cfg.sigma_hat if cfg.sigma_hat is not None else estimate_sigma_hat(p, s)
            self.sigma_hat = sh
            self.xx = p.Q_diag + s + sh
            self.ww = 2.0 * s + sh

    def solve(self, gx: np.ndarray, gw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (dx, dw) with (G + R)(dx; dw) = -(gx; gw)."""
        if self.cfg.variant == "proxlinear":
            return -gx / self.xx, -gw / self.ww
        s, C = self.cfg.sigma, self.p.C
        dx = self._solve_S(-gx - s * (C.T @ gw) / self.ww)
        dw = (s * (C @ dx) - gw) / self.ww
        return dx, dw


def admm_xw_step(p: ProblemData, cfg: AdmmConfig, u_next, y, x_prev, w_prev, solver=None):
    """Minimize the augmented Lagrangian plus the R-proximal term in (x, w).

    The objective is quadratic, so the minimizer is one Newton step on
    G + R from the previous point.  Pass ``solver`` to reuse the factor.
    """
    solver = solver or _XWSolver(p, cfg)
    gx, gw = _gradient(p, cfg, x_prev, w_prev, u_next, y)
    dx, dw = solver.solve(gx, gw)
    return x_prev + dx, w_prev + dw


def admm_y_step(p: ProblemData, cfg: AdmmConfig, x, w, u, y) -> np.ndarray:
    return y - cfg.gamma * cfg.sigma * admm_residual(p, x, w, u)


def admm_terminate(p: ProblemData, x, w, u, y, tol_ws: float):
    """The four normalized pADMM optimality residuals."""
    y_C, y_A, y_ux, y_uw = _split_y(p, y)
    r1 = np.linalg.norm(p.c + p.Q @ x - p.C.T @ y_C - p.A.T @ y_A + y_ux) / (
        1.0 + np.linalg.norm(p.c)
    )
    r2 = np.linalg.norm(y_C + y_uw)
    r3 = np.linalg.norm(admm_residual(p, x, w, u)) / (
        np.linalg.norm(np.concatenate([-p.d, p.b])) + 1.0
    )
    y_t = y[p.l + p.m :]
    n = p.n
    v = u + y_t
    fixed = np.concatenate(
        [project_box(prox_g1(v[:n], 1.0, p.D_diag), p.a_l, p.a_u), prox_g2(v[n:], 1.0)]
    )
    r4 = np.linalg.norm(u - fixed) / (1.0 + np.linalg.norm(u) + np.linalg.norm(y_t))
    res = (float(r1), float(r2), float(r3), float(r4))
    return all(r <= tol_ws for r in res), res


def estimate_sigma_hat(p: ProblemData, sigma: float) -> float:
    """1.1 * sigma * ||[C'C + A'A + Off(Q)/sigma, -C'; -C, 0]||_2.

    The norm comes from a Lanczos eigen-solve using only products with C, A
    and Q; tiny systems fall back to a dense eigen-solve.
    """
    n, l = p.n, p.l
    Q_off = (p.Q - sp.diags(p.Q_diag)).tocsr()
    C, A = p.C_csr, p.A_csr

    def mv(v):
        v = np.ravel(v)
        vx, vw = v[:n], v[n:]
        top = C.T @ (C @ vx) + A.T @ (A @ vx) + Q_off @ vx / sigma - C.T @ vw
        return np.concatenate([top, -(C @ vx)])

    N = n + l
    if N <= 10:
        M = np.column_stack([mv(e) for e in np.eye(N)]) if N else np.zeros((0, 0))
        norm = float(np.max(np.abs(np.linalg.eigvalsh(M)))) if N else 0.0
    else:
        op = spla.LinearOperator((N, N), matvec=mv, dtype=float)
        rng = np.random.default_rng(0)
        vals = spla.eigsh(op, k=1, which="LM", tol=1e-6, v0=rng.standard_normal(N))[0]
        norm = float(abs(vals[0]))
    return max(1.1 * sigma * norm, 1e-8 + 1e-4 * sigma)


def choose_variant(p: ProblemData, budget: int = DEFAULT_NNZ_BUDGET) -> str:
    """Prox-linear when the estimated nnz of C'C exceeds ``budget``."""
    col_counts = np.diff(p.C.tocsr().indptr)  # nnz per row of C
    estimate = int(np.sum(col_counts.astype(np.int64) ** 2))
    return "proxlinear" if estimate > budget else "diagonal"


def map_to_pmm_start(p: ProblemData, state: AdmmState) -> Iterate:
    """Translate an ADMM point into a PMM starting iterate.

    z0 keeps the part of the u-dual that is not explained by the l1 term,
    i.e. y_ux minus its projection onto the subdifferential of ||D.||_1 at u_x.
    """
    n, l, m = p.n, p.l, p.m
    y_ux = state.y[l + m : l + m + n]
    ux = state.u[:n]
    D = p.D_diag
    proj = np.where(ux > 0, D, np.where(ux < 0, -D, np.clip(y_ux, -D, D)))
    return Iterate(
        x=state.x.copy(), w=state.w.copy(), y=state.y[: l + m].copy(), z=y_ux - proj
    )


def run_admm(
    p: ProblemData,
    cfg: AdmmConfig | None = None,
    start: AdmmState | None = None,
) -> AdmmResult:
    cfg = cfg or AdmmConfig()
    st = start or AdmmState.zeros(p)
    x, w, u, y = st.x.copy(), st.w.copy(), st.u.copy(), st.y.copy()
    solver = _XWSolver(p, cfg)
    res = (math.inf,) * 4
    converged = False
    k = 0
    for k in range(1, cfg.max_iter + 1):
        u = admm_u_step(p, cfg, x, w, y)
        x, w = admm_xw_step(p, cfg, u, y, x, w, solver)
        y = admm_y_step(p, cfg, x, w, u, y)
        converged, res = admm_terminate(p, x, w, u, y, cfg.tol_ws)
        if converged or not np.all(np.isfinite(res)):
            break
    log.debug("pADMM (%s): %d iterations, residuals %s", cfg.variant, k, res)
    return AdmmResult(AdmmState(x, w, u, y), k if cfg.max_iter else 0, converged, res, cfg.variant)
