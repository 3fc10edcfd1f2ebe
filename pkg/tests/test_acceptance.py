"""Acceptance criteria, one test each.

Every test records a single PASS/FAIL line; the lines are echoed during the
run and again in the terminal summary.
"""

from __future__ import annotations

import dataclasses
from unittest import mock

import numpy as np
import pytest

import pwlqp.pmm
import pwlqp.ssn
from conftest import ACCEPTANCE_KEY
from harvest import harvest_states
from oracles import full_newton_matrix, naive_mhat, naive_termination, random_problem, reference_optimum
from pwlqp.models import LabeledDataset, build_cvar, build_quantile, synthetic_returns
from pwlqp.pmm import PenaltySchedule, Status, pmm_solve
from pwlqp.problem import absorb_abs_term, absorb_max_term, make_problem, objective
from pwlqp.prox import project_box, prox_g1, prox_g2, select_B_delta, select_B_g1, select_B_g2
from pwlqp.solver import solve
from pwlqp.ssn import build_active_sets, newton_direction, residual_Mhat

N_SMALL = 120
TRIALS = 1000


@pytest.fixture
def verdict(request, capsys):
    def record(label: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        getattr(request.config, ACCEPTANCE_KEY).append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


@dataclasses.dataclass
class Run:
    problem: object
    report: object
    iterate: object
    searches: list  # (ctx, point, direction, result, heuristic, theta0)


def _instrumented_solve(p, solve_fn):
    """Solve while recording every line search the inner solver performs."""
    searches = []
    real = pwlqp.ssn.line_search

    def spy(ctx, point, direction, theta0=None, heuristic=False):
        res = real(ctx, point, direction, theta0, heuristic)
        searches.append((ctx, point, direction, res, heuristic, theta0))
        return res

    with mock.patch.object(pwlqp.ssn, "line_search", spy):
        it, rep = solve_fn(p)
    return Run(p, rep, it, searches)


@pytest.fixture(scope="module")
def small_runs():
    rng = np.random.default_rng(2024)
    runs = []
    for _ in range(N_SMALL):
        n = int(rng.integers(1, 9))
        l = int(rng.integers(0, 13))
        m = int(rng.integers(0, min(4, n) + 1))
        p = random_problem(rng, n, l, m, conditioned_A=True)
        runs.append(_instrumented_solve(p, lambda q: pmm_solve(q, tol=1e-7)))
    return runs


@pytest.fixture(scope="module")
def market_runs():
    """Cold and warm CVaR solves on ten synthetic 28 x 1363 markets."""
    out = []
    for seed in range(10):
        p = build_cvar(synthetic_returns(seed=seed), 0.05, 1e-2)
        cold = _instrumented_solve(p, lambda q: solve(q, tol=1e-5, warmstart="none"))
        warm = _instrumented_solve(p, lambda q: solve(q, tol=1e-5, warmstart="auto"))
        out.append((cold, warm))
    return out


def test_c1_oracle_equivalence(small_runs, verdict):
    worst, misses, not_opt = 0.0, 0, 0
    for run in small_runs:
        want, _ = reference_optimum(run.problem)
        if run.report.status != Status.OPTIMAL:
            not_opt += 1
            continue
        err = abs(run.report.objective - want) / max(1.0, abs(want))
        worst = max(worst, err)
        misses += err > 1e-5
    ok = misses == 0 and not_opt == 0 and len(small_runs) >= 100
    verdict("C1 oracle equivalence", ok,
            f"{len(small_runs)} instances, {not_opt} not optimal, {misses} above 1e-5, worst rel. err {worst:.2e}")


def test_c2_full_vs_reduced(verdict):
    rng = np.random.default_rng(7)
    worst, count, patterns = 0.0, 0, set()
    while count < 150:
        p = random_problem(rng, int(rng.integers(1, 7)), int(rng.integers(1, 7)), 0, conditioned_A=True)
        if rng.random() < 0.7:
            m = int(rng.integers(1, min(p.n, 6) + 1))
            p = random_problem(rng, p.n, p.l, m, conditioned_A=True)
        for ctx, (x, w, y) in harvest_states(p, max_outer=15):
            sets = build_active_sets(ctx, x, w, y)
            M = full_newton_matrix(p, sets.b_g1, sets.b_g2, sets.b_delta > 0.5, ctx.beta, ctx.rho, ctx.zeta)
            full = np.linalg.solve(M, -residual_Mhat(ctx, x, w, y))
            got = np.concatenate(newton_direction(ctx, x, w, y)[0])
            worst = max(worst, float(np.max(np.abs(got - full))))
            patterns.add((sets.b_g1.tobytes(), sets.b_g2.tobytes(), sets.b_delta.tobytes()))
            count += 1
    verdict("C2 full vs reduced Newton", worst <= 1e-9,
            f"{count} solver states, {len(patterns)} active-set patterns, max abs diff {worst:.2e}")


def test_c3_termination_exactness(small_runs, market_runs, verdict):
    checked, bad = 0, 0
    runs = [(r, 1e-7) for r in small_runs] + [(r, 1e-5) for pair in market_runs[:2] for r in pair]
    for run, tol in runs:
        if run.report.status != Status.OPTIMAL:
            continue
        it = run.iterate
        res = naive_termination(run.problem, it.x, it.w, it.y, it.z)
        checked += 1
        bad += max(res) > tol
    verdict("C3 termination residuals", bad == 0 and checked > 0,
            f"{checked} optimal solves re-verified, {bad} with a naive residual above tol")


def test_c4_line_search_contract(small_runs, market_runs, verdict):
    steps, violations, naive_checked = 0, 0, 0
    all_runs = list(small_runs) + [r for pair in market_runs for r in pair]
    for run in all_runs:
        small = run in small_runs
        for ctx, point, direction, res, heuristic, theta0 in run.searches:
            if heuristic or not res.accepted:
                continue
            steps += 1
            if theta0 is None:
                theta0 = float(np.sum(residual_Mhat(ctx, *point) ** 2))
            a = ctx.delta_ls ** res.m
            violations += not res.theta <= (1 - 2 * ctx.mu * a) * theta0
            if small:
                # independent re-evaluation of both merits
                p = ctx.problem
                args = (ctx.x_k, ctx.y_k, ctx.z_k, ctx.beta, ctx.rho, ctx.zeta)
                old = naive_mhat(p, *point, *args)
                new = naive_mhat(p, res.x, res.w, res.y, *args)
                slack = 1e-12 * (old @ old)
                violations += not new @ new <= (1 - 2 * ctx.mu * a) * (old @ old) + slack
                naive_checked += 1
    verdict("C4 line-search inequality", violations == 0 and steps > 0,
            f"{steps} accepted steps ({naive_checked} re-evaluated naively), {violations} violations")


def test_c5_factorization_accounting(small_runs, market_runs, verdict):
    all_reports = [r.report for r in small_runs] + [r.report for pair in market_runs for r in pair]
    over = sum(r.factorizations > r.inner_iters_total for r in all_reports)
    cold = market_runs[0][0]
    l = cold.problem.l
    kink = cold.report.active_set_sizes[1]
    ok = (over == 0 and cold.report.status == Status.OPTIMAL
          and cold.report.outer_iters <= 200 and kink < l)
    verdict("C5 factorization accounting", ok,
            f"{len(all_reports)} solves, {over} with Fact. > SSN; market run {cold.report.status} "
            f"{cold.report.iteration_triple()}, |N_g2|={kink} < l={l}")


def test_c6_prox_properties(verdict):
    rng = np.random.default_rng(11)
    worst = {"firm": 0.0, "moreau": 0.0, "idempotent": 0.0, "consistent": 0.0}
    for _ in range(TRIALS):
        k = int(rng.integers(1, 10))
        u, v = rng.normal(0, 5, k), rng.normal(0, 5, k)
        zeta = rng.uniform(1e-3, 5.0)
        D = rng.random(k) * (rng.random(k) > 0.2)
        lo = np.where(rng.random(k) < 0.2, -np.inf, -rng.random(k) * 3)
        hi = np.where(rng.random(k) < 0.2, np.inf, rng.random(k) * 3)
        maps = (lambda t: prox_g1(t, zeta, D), lambda t: prox_g2(t, zeta), lambda t: project_box(t, lo, hi))
        for f in maps:
            fu, fv = f(u), f(v)
            worst["firm"] = max(worst["firm"], np.sum((fu - fv) ** 2) - (fu - fv) @ (u - v))
            worst["idempotent"] = max(worst["idempotent"], float(np.max(np.abs(f(f(u)) - f(u)))) if f is maps[2] else 0.0)
        # Moreau: u = prox_{zeta f}(u) + zeta * Pi_{dom f*}(u / zeta)
        m1 = prox_g1(u, zeta, D) + zeta * np.clip(u / zeta, -D, D) - u
        m2 = prox_g2(u, zeta) + zeta * np.clip(u / zeta, 0, 1) - u
        worst["moreau"] = max(worst["moreau"], float(np.max(np.abs(np.r_[m1, m2]))))
        # selectors are 0/1 projectors and reproduce the map on their piece
        z, x, beta = rng.normal(0, 3, k), rng.normal(0, 3, k), rng.uniform(0.1, 10)
        s1, s2, s3 = select_B_g1(u, zeta, D), select_B_g2(u, np.zeros(k), zeta), select_B_delta(z, x, beta, lo, hi)
        for s in (s1, s2, s3):
            worst["idempotent"] = max(worst["idempotent"], float(np.max(np.abs(s * s - s))))
        pieces = [
            np.abs(prox_g1(u, zeta, D) - s1 * (u - zeta * D * np.sign(u))),
            np.abs(prox_g2(u, zeta) - (u - s2 * zeta * (u >= zeta)) * s2),
        ]
        t = z / beta + x
        inside = s3 > 0
        pieces.append(np.abs(project_box(t, lo, hi)[inside] - t[inside]))
        pieces.append(np.array([float(np.any((t[~inside] > lo[~inside]) & (t[~inside] < hi[~inside])))]))
        worst["consistent"] = max(worst["consistent"], float(max(np.max(q) if q.size else 0.0 for q in pieces)))
    ok = all(v <= 1e-12 for v in worst.values())
    verdict("C6 prox/selector properties", ok,
            f"{TRIALS} trials; worst " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_c7_transformer_identities(verdict):
    rng = np.random.default_rng(12)
    base = make_problem(rng.standard_normal(3), Q=np.eye(3), C=rng.standard_normal((2, 3)), d=rng.standard_normal(2),
                        D=rng.random(3))
    C1, d1 = rng.standard_normal((4, 3)), rng.standard_normal(4)
    C2, E2, d2, e2 = rng.standard_normal((3, 3)), rng.standard_normal((3, 3)), rng.standard_normal(3), rng.standard_normal(3)
    p_abs, p_max = absorb_abs_term(base, C1, d1), absorb_max_term(base, C2, E2, d2, e2)
    worst = 0.0
    for _ in range(TRIALS):
        x = rng.normal(0, 3, 3)
        f0 = objective(base, x)
        a = f0 + np.abs(C1 @ x + d1).sum()
        b = f0 + np.maximum(C2 @ x + d2, E2 @ x + e2).sum()
        worst = max(worst, abs(objective(p_abs, x) - a) / max(1, abs(a)),
                    abs(objective(p_max, x) - b) / max(1, abs(b)))
    verdict("C7 transformer identities", worst <= 1e-12, f"{TRIALS} points, worst scaled diff {worst:.1e}")


def _breakpoint_optimum(x, y, alpha):
    best = np.inf
    for i in range(len(x)):
        for j in range(i + 1, len(x)):
            if x[i] == x[j]:
                continue
            b = (y[j] - y[i]) / (x[j] - x[i])
            b0 = y[i] - b * x[i]
            r = (y - b0 - b * x) / len(x)
            best = min(best, float(np.sum(np.where(r >= 0, alpha * r, (alpha - 1) * r))))
    return best


def test_c8_quantile_breakpoints(verdict):
    x = np.array([-1.0, 0.0, 0.5, 1.5, 2.0])
    y = np.array([0.3, -0.2, 1.1, 0.9, 2.4])
    ds = LabeledDataset(np.array(x)[:, None], y)
    worst, ok = 0.0, True
    for alpha in (0.5, 0.65, 0.8, 0.95):
        _, rep = solve(build_quantile(ds, alpha, 0.0, 0.5), tol=1e-8)
        want = _breakpoint_optimum(x, y, alpha)
        err = abs(rep.objective - want) / max(1.0, abs(want))
        worst = max(worst, err)
        ok &= rep.status == Status.OPTIMAL and err <= 1e-6
    verdict("C8 quantile breakpoints", ok, f"alpha in (0.5, 0.65, 0.8, 0.95), worst rel. err {worst:.1e}")


def test_c9_warm_start_value(market_runs, verdict):
    wins, rows = 0, []
    for seed, (cold, warm) in enumerate(market_runs):
        c, w = cold.report, warm.report
        won = w.status == Status.OPTIMAL and w.inner_iters_total < c.inner_iters_total
        wins += won
        rows.append(f"{seed}:{c.iteration_triple()}->{w.iteration_triple()}")
    verdict("C9 warm-start value", wins >= 8, f"warm < cold SSN in {wins}/10 seeds; " + " ".join(rows))
