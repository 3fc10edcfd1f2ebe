"""LDL' factorization of the reduced quasi-definite Newton matrix.

The matrix has the form

    K = [ H   E' ]      H = -(scaled Hessian), negative definite
        [ E   rI ]      r = 1/beta > 0

Every symmetric permutation of a quasi-definite matrix has an LDL' factor
with diagonal D, so no pivoting is needed.  We pick between two block
orderings: constraints first (the (2,2) block is diagonal, so its pivots are
exact and the Schur complement is |B| x |B|), or primal first when H is
diagonal and smaller Schur complement results.  The Schur complement is
factorized densely.
"""

from __future__ import annotations

import dataclasses
import hashlib

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = [
    "SaddleSystem",
    "Factorization",
    "FactorizationError",
    "FactorCache",
    "factorize",
    "solve",
    "make_signature",
]

PIVOT_TOL = 1e-14


class FactorizationError(RuntimeError):
    """Numerical breakdown: a pivot of the wrong sign or (near) zero magnitude."""


def make_signature(*parts) -> str:
    """Hash index masks (bool arrays) and scalars into a cache key."""
    h = hashlib.blake2b(digest_size=16)
    for part in parts:
        if isinstance(part, np.ndarray):
            h.update(np.packbits(part.astype(bool)).tobytes())
            h.update(str(part.shape).encode())
        else:
            h.update(repr(part).encode())
        h.update(b"|")
    return h.hexdigest()


@dataclasses.dataclass(frozen=True, eq=False)
class SaddleSystem:
    H_red: sp.csc_matrix  # (1,1) block, negative definite
    E: sp.csr_matrix  # (k x nb)
    reg: float  # (2,2) block is reg * I
    signature: str = ""

    @property
    def nb(self) -> int:
        return self.H_red.shape[0]

    @property
    def k(self) -> int:
        return self.E.shape[0]

    @property
    def size(self) -> int:
        return self.nb + self.k

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v1, v2 = v[: self.nb], v[self.nb :]
        return np.concatenate([self.H_red @ v1 + self.E.T @ v2, self.E @ v1 + self.reg * v2])

    def to_sparse(self) -> sp.csc_matrix:
        return sp.bmat(
            [[self.H_red, self.E.T], [self.E, self.reg * sp.identity(self.k)]], format="csc"
        )


@dataclasses.dataclass(frozen=True, eq=False)
class Factorization:
    """Permuted LDL' factor: ``P K P' = L diag(pivots) L'``.

    ``order`` is "constraints-first" or "primal-first"; ``pivots`` lists the
    diagonal of D in elimination order.  The Schur complement is stored as
    the dense Cholesky factor of its definite sign-flipped form, so its
    unit-lower factor is ``schur_L / diag(schur_L)``.
    """

    system: SaddleSystem
    order: str
    pivots: np.ndarray
    schur_L: np.ndarray  # Cholesky factor of the sign-flipped Schur complement
    first_diag: np.ndarray  # pivots of the eliminated diagonal block

    @property
    def inertia(self) -> tuple[int, int, int]:
        return (
            int(np.sum(self.pivots < 0)),
            int(np.sum(self.pivots > 0)),
            int(np.sum(self.pivots == 0)),
        )

    @property
    def signature(self) -> str:
        return self.system.signature


def _dense_chol(S: np.ndarray) -> np.ndarray:
    try:
        return sla.cholesky(S, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise FactorizationError(f"Schur complement is not definite: {exc}") from exc


def _check_pivots(pivots: np.ndarray, nb: int, k: int) -> None:
    if np.any(~np.isfinite(pivots)) or np.any(np.abs(pivots) < PIVOT_TOL):
        bad = np.flatnonzero(~np.isfinite(pivots) | (np.abs(pivots) < PIVOT_TOL))
        raise FactorizationError(f"near-zero or non-finite pivots at positions {bad[:10].tolist()}")
    neg, pos = int(np.sum(pivots < 0)), int(np.sum(pivots > 0))
    if (neg, pos) != (nb, k):
        raise FactorizationError(f"wrong inertia: got ({neg}-, {pos}+), expected ({nb}-, {k}+)")


def factorize(sys: SaddleSystem) -> Factorization:
    nb, k = sys.nb, sys.k
    if sys.reg <= 0:
        raise FactorizationError(f"(2,2) block must be positive definite, got reg={sys.reg}")
    H = sys.H_red
    h_diag = H.diagonal()
    h_is_diag = (H - sp.diags(h_diag)).count_nonzero() == 0
    if h_is_diag and k < nb:
        # eliminate the primal block (diagonal pivots), Schur on constraints
        if np.any(h_diag >= 0):
            raise FactorizationError("(1,1) block is not negative definite")
        Einv = sp.diags(1.0 / h_diag) @ sys.E.T  # nb x k
        S = sys.reg * np.eye(k) - np.asarray((sys.E @ Einv).todense()) if k else np.zeros((0, 0))
        L = _dense_chol(S) if k else np.zeros((0, 0))
        pivots = np.concatenate([h_diag, np.diag(L) ** 2])
        fac = Factorization(sys, "primal-first", pivots, L, h_diag)
    else:
        # eliminate the reg*I block, Schur on the primal block (negative definite)
        EtE = (sys.E.T @ sys.E).toarray() if k else np.zeros((nb, nb))
        S = -H.toarray() + EtE / sys.reg
        L = _dense_chol(S) if nb else np.zeros((0, 0))
        pivots = np.concatenate([np.full(k, sys.reg), -np.diag(L) ** 2])
        fac = Factorization(sys, "constraints-first", pivots, L, np.full(k, sys.reg))
    _check_pivots(fac.pivots, nb, k)
    return fac


def _solve_once(f: Factorization, rhs: np.ndarray) -> np.ndarray:
    sys = f.system
    nb = sys.nb
    r1, r2 = rhs[:nb], rhs[nb:]
    if f.order == "primal-first":
        # H x1 + E' x2 = r1 ; E x1 + reg x2 = r2
        t = r1 / f.first_diag
        s_rhs = r2 - sys.E @ t
        x2 = sla.cho_solve((f.schur_L, True), s_rhs) if sys.k else s_rhs
        x1 = (r1 - sys.E.T @ x2) / f.first_diag
    else:
        # Schur S = E'E/reg - H (positive definite) solves for x1 with sign flip
        s_rhs = sys.E.T @ (r2 / sys.reg) - r1
        x1 = sla.cho_solve((f.schur_L, True), s_rhs) if nb else s_rhs
        x2 = (r2 - sys.E @ x1) / sys.reg
    return np.concatenate([x1, x2])


def solve(f: Factorization, rhs: np.ndarray) -> np.ndarray:
    """Solve ``K x = rhs`` with one step of iterative refinement."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (f.system.size,):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({f.system.size},)")
    x = _solve_once(f, rhs)
    x += _solve_once(f, rhs - f.system.matvec(x))
    return x


class FactorCache:
    """Depth-one cache keyed by the system signature."""

    def __init__(self) -> None:
        self._latest: Factorization | None = None
        self.hits = 0
        self.misses = 0

    def lookup(self, signature: str) -> Factorization | None:
        if self._latest is not None and signature and self._latest.signature == signature:
            return self._latest
        return None

    def get_or_factorize(self, sys: SaddleSystem) -> tuple[Factorization, bool]:
        """Return (factorization, fresh) where ``fresh`` means a new factorization was computed."""
        hit = self.lookup(sys.signature)
        if hit is not None:
            self.hits += 1
            return hit, False
        self.misses += 1
        self._latest = factorize(sys)
        return self._latest, True

    def clear(self) -> None:
        self._latest = None
