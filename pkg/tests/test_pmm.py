import math

import numpy as np
import pytest

from oracles import conic_oracle, enumeration_oracle, naive_termination, random_problem
from pwlqp.models import ReturnsDataset, build_cvar
from pwlqp.pmm import (
    PenaltySchedule,
    SolveReport,
    Status,
    check_termination,
    penalty_update,
    pmm_solve,
    z_update,
)
from pwlqp.problem import Iterate, make_problem
from pwlqp.prox import project_box


def test_z_update_examples():
    a_l, a_u = np.array([0.0, 0.0, -np.inf]), np.array([1.0, 1.0, np.inf])
    z = z_update(np.zeros(3), np.array([2.0, 0.5, 7.0]), 1.0, a_l, a_u)
    np.testing.assert_array_equal(z, [1.0, 0.0, 0.0])


def test_z_update_is_moreau_split():
    # z/beta + x splits into its box projection plus the normal-cone part z_next/beta
    rng = np.random.default_rng(0)
    a_l, a_u = -rng.random(20), rng.random(20)
    zk, x, beta = rng.standard_normal(20), rng.standard_normal(20), 3.0
    z = z_update(zk, x, beta, a_l, a_u)
    v = zk / beta + x
    np.testing.assert_allclose(project_box(v, a_l, a_u) + z / beta, v, atol=1e-14)
    np.testing.assert_allclose(z[(v > a_l) & (v < a_u)], 0, atol=1e-14)
    # naive per-coordinate formula
    want = [zk[i] + beta * x[i] - beta * min(max(v[i], a_l[i]), a_u[i]) for i in range(20)]
    np.testing.assert_array_equal(z, want)


def test_z_update_upper_bound_pin():
    z = z_update(np.array([1.0]), np.array([1.5]), 2.0, np.array([0.0]), np.array([1.0]))
    assert z[0] == 1.0 + 2.0 * (1.5 - 1.0)


def test_penalty_update_grows_on_stall_and_caps():
    s = PenaltySchedule()
    assert penalty_update(s, 0, 10.0, (1.0, 0.99)) == (50.0, 50.0 / s.tau(1))
    assert penalty_update(s, 0, 10.0, (1.0, 0.5))[0] == 10.0
    assert penalty_update(s, 0, 5e7, (1.0, 1.0))[0] == s.beta_inf
    for beta in (10.0, 1e3, s.beta_inf):
        b, r = penalty_update(s, 4, beta, (1.0, 1.0))
        assert r * s.tau(5) == pytest.approx(b)


def test_schedule_tau_and_eps():
    s = PenaltySchedule()
    assert s.tau(3) == pytest.approx(0.2)
    assert s.rho(10.0, 0) == pytest.approx(50.0)
    assert s.eps_inner(0, 1e-5) == 1.0
    assert s.eps_inner(3, 1e-5, anchor_distance=0.5) == pytest.approx(0.05)
    assert s.eps_inner(100, 1e-5) == pytest.approx(1e-6)
    assert PenaltySchedule(zeta=None).zeta_for(100.0) == 0.01


def test_check_termination_matches_naive():
    rng = np.random.default_rng(1)
    for _ in range(30):
        p = random_problem(rng, 5, 4, 2)
        it = Iterate(rng.standard_normal(5), rng.standard_normal(4), rng.standard_normal(6), rng.standard_normal(5))
        ok, res = check_termination(p, it, 1e-5)
        np.testing.assert_allclose(res, naive_termination(p, it.x, it.w, it.y, it.z), rtol=1e-12)
        assert not ok


def test_already_optimal_start_returns_immediately():
    p = make_problem([0.0, 0.0], Q=np.eye(2))
    it, rep = pmm_solve(p)
    assert rep.status == Status.OPTIMAL and rep.outer_iters == 0
    assert rep.objective == 0.0


def test_trivial_instance_one_outer_iteration():
    p = make_problem([0.0, 0.0, 0.0], Q=np.eye(3))
    it, rep = pmm_solve(p)
    assert rep.status == Status.OPTIMAL and rep.outer_iters <= 1
    np.testing.assert_array_equal(it.x, 0.0)


def test_box_instance_converges_fast():
    # min x^2/2 - x on [-5, 5]; the proximal term makes the outer rate linear
    p = make_problem([-1.0], Q=[[1.0]], a_l=[-5.0], a_u=[5.0])
    it, rep = pmm_solve(p, tol=1e-6)
    assert rep.status == Status.OPTIMAL and rep.outer_iters <= 10
    assert it.x[0] == pytest.approx(1.0, abs=1e-4)


def test_termination_hand_cases():
    # min x^2/2 - x: x = 1 is a KKT point, x = 0 is feasible but not optimal
    p = make_problem([-1.0], Q=[[1.0]])
    ok, res = check_termination(p, Iterate(np.ones(1), np.zeros(0), np.zeros(0), np.zeros(1)), 1e-12)
    assert ok and res == (0.0, 0.0, 0.0, 0.0)
    _, res = check_termination(p, Iterate(np.zeros(1), np.zeros(0), np.zeros(0), np.zeros(1)), 1e-12)
    assert res[2] == 0.0 and res[0] > 0


def test_two_asset_cvar_matches_oracle():
    xi = np.array([[2.0, -1.0], [-3.0, 4.0], [1.0, 0.5]])
    p = build_cvar(ReturnsDataset(xi), 0.5, 1e-2, -1.0, 1.0)
    it, rep = pmm_solve(p, tol=1e-5)
    assert rep.status == Status.OPTIMAL
    want, _ = conic_oracle(p)
    assert rep.objective == pytest.approx(want, rel=1e-6, abs=1e-8)


@pytest.mark.parametrize("seed", range(8))
def test_random_small_matches_enumeration(seed):
    rng = np.random.default_rng(100 + seed)
    p = random_problem(rng, 4, 3, 1, conditioned_A=True)
    it, rep = pmm_solve(p, tol=1e-8)
    want = enumeration_oracle(p)
    assert want is not None and rep.status == Status.OPTIMAL
    assert rep.objective == pytest.approx(want[0], rel=1e-6, abs=1e-8)
    assert rep.factorizations <= rep.inner_iters_total


def test_max_outer_zero_reports_start():
    p = random_problem(np.random.default_rng(2), 3, 2, 1)
    it, rep = pmm_solve(p, sched=PenaltySchedule(max_outer=0))
    assert rep.status == Status.MAX_ITER and rep.outer_iters == 0
    assert math.isfinite(max(rep.residuals))


def test_callback_and_dimension_check():
    p = random_problem(np.random.default_rng(3), 3, 2, 1)
    seen = []
    pmm_solve(p, tol=1e-6, callback=lambda k, it, st, res: seen.append(k))
    assert seen and seen == list(range(1, len(seen) + 1))
    with pytest.raises(ValueError):
        pmm_solve(p, Iterate(np.zeros(2), np.zeros(2), np.zeros(3), np.zeros(2)))


def test_infeasible_equalities_do_not_report_optimal():
    # x1 + x2 = 1 and x1 + x2 = 3 cannot both hold
    p = make_problem([0.0, 0.0], A=[[1.0, 1.0], [1.0, 1.0]], b=[1.0, 3.0], a_l=[-1, -1], a_u=[1, 1])
    _, rep = pmm_solve(p, sched=PenaltySchedule(max_outer=40))
    assert rep.status != Status.OPTIMAL


def test_report_dict():
    rep = SolveReport(outer_iters=3, inner_iters_total=7, factorizations=5)
    d = rep.to_dict()
    assert d["iterations"] == "3(7)[5]" == rep.iteration_triple() and isinstance(d["residuals"], list)
