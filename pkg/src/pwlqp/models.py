"""Builders that turn application datasets into :class:`ProblemData`.

Four applications are covered: CVaR and MAsD portfolio selection,
elastic-net quantile regression and elastic-net linear SVMs.  Each builder
documents its variable layout, which callers need to read solutions back.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.sparse as sp

from .problem import ProblemData, make_problem

__all__ = [
    "ReturnsDataset",
    "LabeledDataset",
    "build_cvar",
    "build_masd",
    "build_quantile",
    "build_svm",
    "synthetic_returns",
    "synthetic_labeled",
    "cvar_loss",
    "masd_loss",
    "quantile_loss",
    "svm_loss",
]

DEFAULT_LOWER = -1.0
DEFAULT_UPPER = 0.6


@dataclasses.dataclass(frozen=True, eq=False)
class ReturnsDataset:
    """Scenario returns (l x n_assets) and the expected-return floor."""

    scenarios: np.ndarray
    benchmark: float | None = None

    def __post_init__(self) -> None:
        xi = np.asarray(self.scenarios, dtype=float)
        if xi.ndim != 2 or xi.shape[0] < 1 or xi.shape[1] < 1:
            raise ValueError(f"scenarios must be a non-empty 2-d array, got shape {xi.shape}")
        if not np.all(np.isfinite(xi)):
            raise ValueError("scenarios contain missing or non-finite values")
        object.__setattr__(self, "scenarios", xi)

    @property
    def n_assets(self) -> int:
        return self.scenarios.shape[1]

    @property
    def n_scenarios(self) -> int:
        return self.scenarios.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.scenarios.mean(axis=0)

    def target_return(self) -> float:
        """The benchmark if given, else the uniform allocation's mean return."""
        if self.benchmark is not None:
            return float(self.benchmark)
        return float(self.mean.mean())


@dataclasses.dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Features (l x d, dense or sparse) with real or +-1 targets."""

    features: sp.csr_matrix
    targets: np.ndarray

    def __post_init__(self) -> None:
        X = sp.csr_matrix(self.features, dtype=float)
        y = np.asarray(self.targets, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
        if X.shape[0] < 1:
            raise ValueError("dataset is empty")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def _asset_box(n_assets: int, a_l, a_u) -> tuple[np.ndarray, np.ndarray]:
    lo = np.broadcast_to(np.asarray(a_l, dtype=float), (n_assets,)).copy()
    hi = np.broadcast_to(np.asarray(a_u, dtype=float), (n_assets,)).copy()
    if np.any(lo < -1.0) or np.any(hi > 1.0):
        raise ValueError("asset bounds must satisfy a_l >= -1 and a_u <= 1")
    return lo, hi


def _portfolio_equalities(ds: ReturnsDataset, extra_cols: int) -> tuple[sp.csr_matrix, np.ndarray]:
    """Budget row and expected-return row ``mean'x - s = r``; s is the last column."""
    na = ds.n_assets
    budget = np.concatenate([np.ones(na), np.zeros(extra_cols)])
    ret = np.concatenate([ds.mean, np.zeros(extra_cols)])
    ret[-1] = -1.0
    return sp.csr_matrix(np.vstack([budget, ret])), np.array([1.0, ds.target_return()])


def build_cvar(
    ds: ReturnsDataset,
    alpha: float,
    tau: float,
    a_l=DEFAULT_LOWER,
    a_u=DEFAULT_UPPER,
) -> ProblemData:
    """CVaR_alpha portfolio with an l1 penalty.

    Variables are (x_1..x_n, t, s): t is the value-at-risk level and s >= 0
    the slack of the return constraint.  Row i of C encodes
    (-xi_i'x - t) / (l alpha).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    na, l = ds.n_assets, ds.n_scenarios
    lo, hi = _asset_box(na, a_l, a_u)
    scale = 1.0 / (l * alpha)
    C = np.hstack([-ds.scenarios * scale, np.full((l, 1), -scale), np.zeros((l, 1))])
    A, b = _portfolio_equalities(ds, 2)
    c = np.zeros(na + 2)
    c[na] = 1.0
    return make_problem(
        c,
        C=sp.csr_matrix(C),
        d=np.zeros(l),
        A=A,
        b=b,
        D=np.concatenate([np.full(na, tau), [0.0, 0.0]]),
        a_l=np.concatenate([lo, [-np.inf, 0.0]]),
        a_u=np.concatenate([hi, [np.inf, np.inf]]),
    )


def build_masd(
    ds: ReturnsDataset, tau: float, a_l=DEFAULT_LOWER, a_u=DEFAULT_UPPER
) -> ProblemData:
    """Mean absolute semi-deviation portfolio; variables (x_1..x_n, s)."""
    if ds.n_scenarios < 2:
        raise ValueError("MAsD needs at least two scenarios")
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    na, l = ds.n_assets, ds.n_scenarios
    lo, hi = _asset_box(na, a_l, a_u)
    C = np.hstack([(ds.mean[None, :] - ds.scenarios) / l, np.zeros((l, 1))])
    A, b = _portfolio_equalities(ds, 1)
    return make_problem(
        np.zeros(na + 1),
        C=sp.csr_matrix(C),
        d=np.zeros(l),
        A=A,
        b=b,
        D=np.concatenate([np.full(na, tau), [0.0]]),
        a_l=np.concatenate([lo, [0.0]]),
        a_u=np.concatenate([hi, [np.inf]]),
    )


def _with_intercept(X: sp.csr_matrix) -> sp.csr_matrix:
    return sp.hstack([sp.csr_matrix(np.ones((X.shape[0], 1))), X], format="csr")


def build_quantile(ds: LabeledDataset, alpha: float, lam: float, tau: float) -> ProblemData:
    """Elastic-net alpha-quantile regression; variables (beta_0, beta).

    The residual rows are w_i = (y_i - beta_0 - xi_i'beta) / l.  The linear
    cost (alpha - 1) 1'w is folded into c and the constant offset through
    w = Cx + d.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if lam < 0 or not 0.0 <= tau <= 1.0:
        raise ValueError("need lambda >= 0 and tau in [0, 1]")
    l, d = ds.n_samples, ds.n_features
    C = -_with_intercept(ds.features) / l
    dvec = ds.targets / l
    c = (alpha - 1.0) * np.asarray(C.sum(axis=0)).ravel()
    pad = np.concatenate([[0.0], np.ones(d)])
    return make_problem(
        c,
        Q=sp.diags(lam * (1.0 - tau) * pad),
        C=C,
        d=dvec,
        D=lam * tau * pad,
        const_offset=(alpha - 1.0) * float(dvec.sum()),
    )


def build_svm(ds: LabeledDataset, lam: float, tau1: float, tau2: float) -> ProblemData:
    """Elastic-net soft-margin linear SVM; variables (beta_0, beta).

    Row i of C is (y_i, -y_i xi_i') / l with d_i = 1/l, so the plus-part
    sums (1 - y_i(xi_i'beta - beta_0))_+ / l.
    """
    y = ds.targets
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("SVM labels must be -1 or +1")
    if min(lam, tau1, tau2) < 0:
        raise ValueError("lambda, tau1 and tau2 must be non-negative")
    l, d = ds.n_samples, ds.n_features
    Yd = sp.diags(y)
    C = sp.hstack([sp.csr_matrix(y[:, None]), -(Yd @ ds.features)], format="csr") / l
    pad = np.concatenate([[0.0], np.ones(d)])
    return make_problem(
        np.zeros(d + 1),
        Q=sp.diags(lam * tau2 * pad),
        C=C,
        d=np.full(l, 1.0 / l),
        D=lam * tau1 * pad,
    )


# Native loss formulas, written as direct loops for cross-checking builders.


def cvar_loss(ds: ReturnsDataset, alpha: float, tau: float, x_assets, t: float) -> float:
    l = ds.n_scenarios
    tail = sum(max(-float(ds.scenarios[i] @ x_assets) - t, 0.0) for i in range(l))
    return t + tail / (l * alpha) + tau * float(np.sum(np.abs(x_assets)))


def masd_loss(ds: ReturnsDataset, tau: float, x_assets) -> float:
    port = ds.scenarios @ x_assets
    mu = float(np.mean(port))
    return float(np.mean([max(mu - v, 0.0) for v in port])) + tau * float(np.sum(np.abs(x_assets)))


def quantile_loss(ds: LabeledDataset, alpha: float, lam: float, tau: float, beta0, beta) -> float:
    X = ds.features.toarray()
    total = 0.0
    for i in range(ds.n_samples):
        r = (ds.targets[i] - beta0 - X[i] @ beta) / ds.n_samples
        total += alpha * r if r >= 0 else (alpha - 1.0) * r
    return total + lam * (tau * np.sum(np.abs(beta)) + 0.5 * (1.0 - tau) * beta @ beta)


def svm_loss(ds: LabeledDataset, lam: float, tau1: float, tau2: float, beta0, beta) -> float:
    X = ds.features.toarray()
    hinge = sum(
        max(1.0 - ds.targets[i] * (X[i] @ beta - beta0), 0.0) for i in range(ds.n_samples)
    )
    return hinge / ds.n_samples + lam * (tau1 * np.sum(np.abs(beta)) + 0.5 * tau2 * beta @ beta)


def synthetic_returns(
    n_assets: int = 28,
    n_scenarios: int = 1363,
    seed: int | None = 0,
    n_factors: int = 3,
) -> ReturnsDataset:
    """Gaussian weekly returns, in percent, from a small factor model.

    Sizes default to a 28-asset, 1363-week market.  The benchmark is the
    mean return of the uniform allocation.  Percent units matter: with
    fractional returns the rows of C are ~1e-4 and the penalty schedule
    needs far larger beta before feasibility is enforced.
    """
    rng = np.random.default_rng(seed)
    loadings = rng.normal(0.0, 2.0, (n_assets, n_factors))
    idio = rng.uniform(1.0, 4.0, n_assets)
    drift = rng.normal(0.2, 0.2, n_assets)
    f = rng.standard_normal((n_scenarios, n_factors))
    e = rng.standard_normal((n_scenarios, n_assets)) * idio
    return ReturnsDataset(drift + f @ loadings.T + e)


def synthetic_labeled(
    n_samples: int = 200,
    n_features: int = 10,
    seed: int | None = 0,
    classification: bool = False,
    density: float = 1.0,
) -> LabeledDataset:
    """Random linear-model data; labels are signs when ``classification``."""
    rng = np.random.default_rng(seed)
    X = sp.random(n_samples, n_features, density=density, random_state=rng, format="csr")
    X.data = rng.standard_normal(X.data.size)
    beta = rng.standard_normal(n_features) * (rng.random(n_features) < 0.5)
    y = X @ beta + 0.3 * rng.standard_normal(n_samples)
    if classification:
        y = np.where(y >= 0, 1.0, -1.0)
    return LabeledDataset(X, y)
