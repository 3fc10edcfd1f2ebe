"""Closed-form proximal maps, box projection and generalized-Jacobian selectors.

Selectors return 0/1 float vectors, i.e. the diagonals of the projector
matrices that enter the semismooth Newton system.  Ties are broken towards
the smaller reduced system: interior tests are strict for the projection and
the soft-threshold, non-strict for the plus-part shift.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "prox_g1",
    "prox_g2",
    "project_box",
    "select_B_delta",
    "select_B_g1",
    "select_B_g2",
    "project_subdiff_g",
]


def prox_g1(u: np.ndarray, zeta: float, D_diag: np.ndarray) -> np.ndarray:
    """Soft-thresholding at level ``zeta * D_diag``; prox of zeta*||D.||_1."""
    return np.sign(u) * np.maximum(np.abs(u) - zeta * D_diag, 0.0)


def prox_g2(u: np.ndarray, zeta: float) -> np.ndarray:
    """Prox of zeta*sum(max(., 0)): shifts positives down by zeta, clamps [0, zeta] to 0."""
    return np.maximum(u - zeta, 0.0) + np.minimum(u, 0.0)


def project_box(u: np.ndarray, a_l: np.ndarray, a_u: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(u, a_l), a_u)


def select_B_delta(
    z: np.ndarray, x: np.ndarray, beta: float, a_l: np.ndarray, a_u: np.ndarray
) -> np.ndarray:
    v = z / beta + x
    return ((v > a_l) & (v < a_u)).astype(float)


def select_B_g1(u_hat: np.ndarray, zeta: float, D_diag: np.ndarray) -> np.ndarray:
    return ((np.abs(u_hat) > zeta * D_diag) | (D_diag == 0)).astype(float)


def select_B_g2(w: np.ndarray, y_head: np.ndarray, zeta: float) -> np.ndarray:
    s = w - zeta * y_head
    return ((s <= 0) | (s >= zeta)).astype(float)


def project_subdiff_g(
    x: np.ndarray, w: np.ndarray, v: np.ndarray, D_diag: np.ndarray
) -> np.ndarray:
    """Project ``v = (v_x, v_w)`` onto the subdifferential of g at (x, w).

    g(x, w) = ||Dx||_1 + sum(max(w, 0)); at a kink the subdifferential is an
    interval and the projection is a clamp, elsewhere it is a single point.
    """
    n = x.shape[0]
    vx, vw = v[:n], v[n:]
    px = np.where(x > 0, D_diag, np.where(x < 0, -D_diag, np.clip(vx, -D_diag, D_diag)))
    pw = np.where(w > 0, 1.0, np.where(w < 0, 0.0, np.clip(vw, 0.0, 1.0)))
    return np.concatenate([px, pw])
