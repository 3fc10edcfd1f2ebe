"""Problem container for convex QPs with piecewise-linear terms.

An instance encodes

    min  c'x + 1/2 x'Qx + sum_i (w_i)_+ + ||Dx||_1 + const_offset
    s.t. Cx + d - w = 0,  Ax = b,  a_l <= x <= a_u

with D diagonal and nonnegative.  Infinite bounds are stored as IEEE +-inf.
"""

from __future__ import annotations

import dataclasses
import json
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ProblemData",
    "Iterate",
    "ProblemValidationError",
    "make_problem",
    "validate",
    "absorb_abs_term",
    "absorb_max_term",
    "objective",
    "problem_to_dict",
    "problem_from_dict",
    "load_problem_json",
    "save_problem_json",
]


class ProblemValidationError(ValueError):
    """Raised when a problem instance violates its structural invariants."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclasses.dataclass(frozen=True, eq=False)
class ProblemData:
    c: np.ndarray
    Q: sp.csc_matrix
    C: sp.csc_matrix
    d: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    D_diag: np.ndarray
    a_l: np.ndarray
    a_u: np.ndarray
    const_offset: float = 0.0

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def l(self) -> int:  # noqa: E743
        return self.d.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @cached_property
    def C_csr(self) -> sp.csr_matrix:
        """Row-compressed mirror of C, used for row slicing."""
        return self.C.tocsr()

    @cached_property
    def A_csr(self) -> sp.csr_matrix:
        return self.A.tocsr()

    @cached_property
    def Q_diag(self) -> np.ndarray:
        return self.Q.diagonal()

    @cached_property
    def Q_is_diagonal(self) -> bool:
        off = self.Q - sp.diags(self.Q_diag)
        return off.count_nonzero() == 0

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.a_l, self.a_u)

    def check(self) -> "ProblemData":
        errors = validate(self)
        if errors:
            raise ProblemValidationError(errors)
        return self


@dataclasses.dataclass
class Iterate:
    """Primal-dual state (x, w, y, z); y stacks the C-row and A-row multipliers."""

    x: np.ndarray
    w: np.ndarray
    y: np.ndarray
    z: np.ndarray

    @classmethod
    def zeros(cls, p: ProblemData) -> "Iterate":
        return cls(np.zeros(p.n), np.zeros(p.l), np.zeros(p.l + p.m), np.zeros(p.n))

    def copy(self) -> "Iterate":
        return Iterate(self.x.copy(), self.w.copy(), self.y.copy(), self.z.copy())

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in (self.x, self.w, self.y, self.z))

    def matches(self, p: ProblemData) -> bool:
        return (
            self.x.shape == (p.n,)
            and self.w.shape == (p.l,)
            and self.y.shape == (p.l + p.m,)
            and self.z.shape == (p.n,)
        )


def _as_csc(M: Any, shape: tuple[int, int]) -> sp.csc_matrix:
    if M is None:
        return sp.csc_matrix(shape)
    out = sp.csc_matrix(M, dtype=float)
    out.sum_duplicates()
    out.eliminate_zeros()
    return out


def _as_vec(v: Any, size: int, fill: float) -> np.ndarray:
    if v is None:
        return np.full(size, fill, dtype=float)
    return np.atleast_1d(np.asarray(v, dtype=float)).copy()


def make_problem(
    c,
    Q=None,
    C=None,
    d=None,
    A=None,
    b=None,
    D=None,
    a_l=None,
    a_u=None,
    const_offset: float = 0.0,
    *,
    check: bool = True,
) -> ProblemData:
    """Build a ProblemData from loosely typed inputs.

    Missing blocks default to empty (C, A), zero (Q, D) or unbounded (a_l, a_u).
    Q is symmetrized.  With ``check=True`` the result is validated and a
    :class:`ProblemValidationError` lists every violation.
    """
    c = _as_vec(c, 0, 0.0)
    n = c.shape[0]
    d = _as_vec(d, 0 if C is None else sp.csc_matrix(C).shape[0], 0.0)
    b = _as_vec(b, 0 if A is None else sp.csc_matrix(A).shape[0], 0.0)
    Qm = _as_csc(Q, (n, n))
    if Qm.shape[0] == Qm.shape[1]:
        Qm = _as_csc(0.5 * (Qm + Qm.T), Qm.shape)
    p = ProblemData(
        c=c,
        Q=Qm,
        C=_as_csc(C, (d.shape[0], n)),
        d=d,
        A=_as_csc(A, (b.shape[0], n)),
        b=b,
        D_diag=_as_vec(D, n, 0.0),
        a_l=_as_vec(a_l, n, -np.inf),
        a_u=_as_vec(a_u, n, np.inf),
        const_offset=float(const_offset),
    )
    return p.check() if check else p


def validate(p: ProblemData) -> list[str]:
    """Return every dimension or sign violation of ``p``; empty means valid.

    Reported indices are 1-based.
    """
    errors: list[str] = []
    n = p.Q.shape[1]
    if p.c.ndim != 1 or p.c.shape[0] != n:
        errors.append(f"c length mismatch: got {p.c.shape[0]}, expected {n}")
    if p.Q.shape[0] != p.Q.shape[1]:
        errors.append(f"Q must be square, got {p.Q.shape}")
    elif p.Q.nnz and abs(p.Q - p.Q.T).max() > 0:
        errors.append("Q is not symmetric")
    if p.C.shape[1] != n:
        errors.append(f"C column count mismatch: got {p.C.shape[1]}, expected {n}")
    if p.C.shape[0] != p.d.shape[0]:
        errors.append(f"d length mismatch: got {p.d.shape[0]}, expected {p.C.shape[0]}")
    if p.A.shape[1] != n:
        errors.append(f"A column count mismatch: got {p.A.shape[1]}, expected {n}")
    if p.A.shape[0] != p.b.shape[0]:
        errors.append(f"b length mismatch: got {p.b.shape[0]}, expected {p.A.shape[0]}")
    for name in ("D_diag", "a_l", "a_u"):
        v = getattr(p, name)
        if v.shape != (n,):
            errors.append(f"{name} length mismatch: got {v.shape[0]}, expected {n}")
    for name in ("c", "d", "b", "D_diag"):
        v = getattr(p, name)
        for i in np.flatnonzero(~np.isfinite(v)):
            errors.append(f"{name} has non-finite entry at index {i + 1}")
    for M, name in ((p.Q, "Q"), (p.C, "C"), (p.A, "A")):
        if not np.all(np.isfinite(M.data)):
            errors.append(f"{name} has non-finite entries")
    if p.D_diag.shape == (n,):
        for i in np.flatnonzero(p.D_diag < 0):
            errors.append(f"negative weight D at index {i + 1}")
    if p.a_l.shape == (n,) and p.a_u.shape == (n,):
        for i in np.flatnonzero(~(p.a_l <= p.a_u)):
            errors.append(f"empty box at index {i + 1}")
        for i in np.flatnonzero(p.a_l == np.inf):
            errors.append(f"lower bound +inf at index {i + 1}")
        for i in np.flatnonzero(p.a_u == -np.inf):
            errors.append(f"upper bound -inf at index {i + 1}")
    return errors


def absorb_abs_term(p: ProblemData, C1, d1) -> ProblemData:
    """Add ``||C1 x + d1||_1`` to the objective.

    Uses |v| = -v + (2v)_+, so the new rows (2 C1, 2 d1) are appended to (C, d)
    and the linear part goes into c and const_offset.
    """
    C1 = sp.csc_matrix(C1, dtype=float)
    d1 = np.atleast_1d(np.asarray(d1, dtype=float))
    if C1.shape[1] != p.n:
        raise ValueError(f"C1 has {C1.shape[1]} columns, expected {p.n}")
    if C1.shape[0] != d1.shape[0]:
        raise ValueError(f"C1 has {C1.shape[0]} rows but d1 has length {d1.shape[0]}")
    ones = np.ones(C1.shape[0])
    return dataclasses.replace(
        p,
        c=p.c - C1.T @ ones,
        C=sp.vstack([p.C, 2.0 * C1], format="csc"),
        d=np.concatenate([p.d, 2.0 * d1]),
        const_offset=p.const_offset - float(d1.sum()),
    )


def absorb_max_term(p: ProblemData, C1, C2, d1, d2) -> ProblemData:
    """Add ``sum_i max{(C1 x + d1)_i, (C2 x + d2)_i}`` to the objective."""
    C1 = sp.csc_matrix(C1, dtype=float)
    C2 = sp.csc_matrix(C2, dtype=float)
    d1 = np.atleast_1d(np.asarray(d1, dtype=float))
    d2 = np.atleast_1d(np.asarray(d2, dtype=float))
    if C1.shape != C2.shape or d1.shape != d2.shape or C1.shape[0] != d1.shape[0]:
        raise ValueError(
            f"shape mismatch: C1 {C1.shape}, C2 {C2.shape}, d1 {d1.shape}, d2 {d2.shape}"
        )
    if C1.shape[1] != p.n:
        raise ValueError(f"C1 has {C1.shape[1]} columns, expected {p.n}")
    ones = np.ones(C1.shape[0])
    return dataclasses.replace(
        p,
        c=p.c + C2.T @ ones,
        C=sp.vstack([p.C, C1 - C2], format="csc"),
        d=np.concatenate([p.d, d1 - d2]),
        const_offset=p.const_offset + float(d2.sum()),
    )


def objective(p: ProblemData, x: np.ndarray, w: np.ndarray | None = None) -> float:
    """Objective value at (x, w); ``w`` defaults to Cx + d.  +inf outside the box."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,):
        raise ValueError(f"x has shape {x.shape}, expected ({p.n},)")
    if w is None:
        w = p.C @ x + p.d
    w = np.asarray(w, dtype=float)
    if w.shape != (p.l,):
        raise ValueError(f"w has shape {w.shape}, expected ({p.l},)")
    if np.any(x < p.a_l) or np.any(x > p.a_u):
        return np.inf
    return float(
        p.c @ x
        + 0.5 * x @ (p.Q @ x)
        + np.maximum(w, 0.0).sum()
        + p.D_diag @ np.abs(x)
        + p.const_offset
    )


# --- JSON container -------------------------------------------------------


def _triplets(M: sp.spmatrix) -> list[list]:
    coo = sp.coo_matrix(M)
    return [[int(i), int(j), float(v)] for i, j, v in zip(coo.row, coo.col, coo.data)]


def _from_triplets(entries, shape: tuple[int, int], name: str) -> sp.csc_matrix:
    if not entries:
        return sp.csc_matrix(shape)
    arr = np.asarray(entries, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name}: expected a list of [row, col, value] triplets")
    rows, cols = arr[:, 0].astype(int), arr[:, 1].astype(int)
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= shape[0] or cols.max() >= shape[1]:
        raise ValueError(f"{name}: triplet index out of range for shape {shape}")
    return sp.csc_matrix((arr[:, 2], (rows, cols)), shape=shape)


def _bound_out(v: np.ndarray) -> list:
    return [("inf" if x > 0 else "-inf") if np.isinf(x) else float(x) for x in v]


def _bound_in(v, n: int, default: float) -> np.ndarray:
    if v is None:
        return np.full(n, default)
    out = np.empty(len(v))
    for i, x in enumerate(v):
        out[i] = default if x is None else float(x)
    return out


def problem_to_dict(p: ProblemData) -> dict:
    return {
        "c": p.c.tolist(),
        "Q": _triplets(p.Q),
        "C": _triplets(p.C),
        "d": p.d.tolist(),
        "A": _triplets(p.A),
        "b": p.b.tolist(),
        "D": p.D_diag.tolist(),
        "a_l": _bound_out(p.a_l),
        "a_u": _bound_out(p.a_u),
        "const_offset": p.const_offset,
    }


def problem_from_dict(data: dict) -> ProblemData:
    """Inverse of :func:`problem_to_dict`.

    Sparse blocks are zero-based (row, col, value) triplets; bounds may be
    numbers, the strings "inf"/"-inf", or null for unbounded.
    """
    if "c" not in data:
        raise ValueError("problem container lacks the required field 'c'")
    c = np.asarray(data["c"], dtype=float)
    n = c.shape[0]
    d = np.asarray(data.get("d", []), dtype=float)
    b = np.asarray(data.get("b", []), dtype=float)
    return make_problem(
        c,
        Q=_from_triplets(data.get("Q"), (n, n), "Q"),
        C=_from_triplets(data.get("C"), (d.shape[0], n), "C"),
        d=d,
        A=_from_triplets(data.get("A"), (b.shape[0], n), "A"),
        b=b,
        D=data.get("D"),
        a_l=_bound_in(data.get("a_l"), n, -np.inf),
        a_u=_bound_in(data.get("a_u"), n, np.inf),
        const_offset=data.get("const_offset", 0.0),
    )


def load_problem_json(path: str | Path) -> ProblemData:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


def save_problem_json(p: ProblemData, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(p), fh)
