import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from wcg import simplex
from wcg.core import ConstraintTable, GangSpec, WcgInstance
from wcg.generators import hand_lp_instance, random_instance, rmab_instance
from wcg.lp import action_probabilities, build_lp, deterministic_trajectory, solve_instance, solve_lp

from oracles import hand_lp_by_hand, vertex_enumeration

APPENDIX_G_GAMMA = 4566.992944248172


def highs_objective(problem, method="highs"):
    res = linprog(
        -problem.c,
        A_ub=problem.A_ub if problem.A_ub.shape[0] else None,
        b_ub=problem.b_ub if problem.A_ub.shape[0] else None,
        A_eq=problem.A_eq,
        b_eq=problem.b_eq,
        bounds=(0, 1),
        method=method,
        options={"presolve": False},
    )
    return res


def test_variable_and_row_counts():
    inst = hand_lp_instance()
    lp = build_lp(inst)
    assert lp.num_vars == 8
    assert lp.A_eq.shape == (2 + 2 + 2, 8)  # flow, normalization, initial
    assert lp.A_ub.shape == (2, 8)


def test_constant_reward_gives_horizon_plus_one():
    g = GangSpec(np.full((1, 2, 2), 0.5), np.ones((2, 1)))
    inst = WcgInstance((g,), ConstraintTable.empty((g,)), 2, np.array([1]), (np.array([1.0, 0.0]),))
    sol = solve_instance(inst)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(3.0, abs=1e-12)


def test_hand_instance_matches_vertex_enumeration():
    oracle = vertex_enumeration(*hand_lp_by_hand())
    assert oracle == pytest.approx(0.5, abs=1e-12)
    sol = solve_instance(hand_lp_instance())
    assert abs(sol.objective - oracle) <= 1e-9


def test_hand_instance_builder_matches_written_lp():
    # the generic builder's feasible set agrees with the hand-written LP on the same x
    c, A_eq, b_eq, A_ub, b_ub = hand_lp_by_hand()
    lp = build_lp(hand_lp_instance())
    x = solve_instance(hand_lp_instance()).x
    assert np.abs(A_eq @ x - b_eq).max() < 1e-12
    assert np.all(A_ub @ x <= b_ub + 1e-12)
    assert c @ x == pytest.approx(lp.c @ x)


def test_two_state_budget_alpha():
    sol = solve_instance(hand_lp_instance())
    alpha = action_probabilities(sol, hand_lp_instance())
    # at t=0 everything is in state 0 and half of it may move
    assert alpha[0, 1] == pytest.approx(0.5, abs=1e-9)
    assert alpha[0, 0] == pytest.approx(0.5, abs=1e-9)
    # state 1 is empty at t=0 so its action distribution is uniform
    assert alpha[0, 2] == pytest.approx(0.5) and alpha[0, 3] == pytest.approx(0.5)


def test_alpha_sums_to_one_per_pair(appendix_g, appendix_g_prepared):
    a = appendix_g_prepared.alpha.alpha
    idx = appendix_g.index
    for row in a:
        assert np.allclose(idx.pair_sums(row), 1.0, atol=1e-9)


def test_deterministic_trajectory_weights():
    g1 = GangSpec(np.full((1, 1, 1), 1.0), np.zeros((1, 1)))
    g2 = GangSpec(np.full((1, 1, 1), 1.0), np.zeros((1, 1)))
    inst = WcgInstance((g1, g2), ConstraintTable.empty((g1, g2)), 0, np.array([1, 3]),
                       (np.array([1.0]), np.array([1.0])))
    z = deterministic_trajectory(solve_instance(inst), inst)
    assert z.tolist() == [[0.25, 0.75]]


def test_appendix_g_certified(appendix_g, appendix_g_prepared):
    sol = appendix_g_prepared.solution
    assert build_lp(appendix_g).num_vars == 999 * 31
    assert sol.status == "optimal"
    assert sol.primal_residual <= 1e-8
    assert sol.residuals["normalization"] <= 1e-8
    assert sol.dual_gap <= 1e-8
    assert sol.objective == pytest.approx(APPENDIX_G_GAMMA, rel=1e-9)


@pytest.mark.slow
def test_appendix_g_matches_highs(appendix_g, appendix_g_prepared):
    # interior point: the HiGHS dual simplex stops at its 1e-7 feasibility tolerance
    res = highs_objective(build_lp(appendix_g), method="highs-ipm")
    assert res.status == 0
    assert -res.fun == pytest.approx(appendix_g_prepared.gamma_star, rel=1e-8)


def test_random_instances_match_highs():
    rng = np.random.default_rng(7)
    for _ in range(40):
        inst = random_instance(rng)
        lp = build_lp(inst)
        mine = solve_lp(lp)
        ref = highs_objective(lp)
        assert ref.status == 0, "instances with feasible cheap actions are always feasible"
        assert mine.status == "optimal"
        assert mine.objective == pytest.approx(-ref.fun, rel=1e-8, abs=1e-8)
        assert mine.primal_residual <= 1e-8


def test_presolve_does_not_change_the_optimum():
    rng = np.random.default_rng(3)
    for _ in range(20):
        lp = build_lp(random_instance(rng))
        a, b = solve_lp(lp, use_presolve=True), solve_lp(lp, use_presolve=False)
        assert a.objective == pytest.approx(b.objective, rel=1e-9, abs=1e-9)


def test_generic_simplex_infeasible_and_unbounded():
    A = sp.csr_matrix(np.array([[1.0, 1.0]]))
    res = simplex.solve(np.zeros(2), A, np.array([3.0]), None, None, np.zeros(2), np.ones(2))
    assert res.status == "infeasible"
    res = simplex.solve(np.array([-1.0, 0.0]), sp.csr_matrix((0, 2)), np.zeros(0), None, None,
                        np.zeros(2), np.array([np.inf, 1.0]))
    assert res.status == "unbounded"


def _relaxed(inst, delta):
    vals = tuple(v - delta for v in inst.constraints.values)
    return WcgInstance(inst.gangs, ConstraintTable(vals, inst.num_constraints), inst.horizon,
                       inst.base_pops, inst.init_dist)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.5))
def test_relaxing_constraints_never_lowers_gamma(seed, delta):
    inst = random_instance(np.random.default_rng(seed), num_constraints=1)
    tight = solve_instance(inst).objective
    loose = solve_instance(_relaxed(inst, delta)).objective
    assert loose >= tight - 1e-8 * max(1.0, abs(tight))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_constraints_never_raise_gamma(seed):
    inst = random_instance(np.random.default_rng(seed), num_constraints=2)
    free = WcgInstance(inst.gangs, ConstraintTable.empty(inst.gangs), inst.horizon, inst.base_pops, inst.init_dist)
    assert solve_instance(inst).objective <= solve_instance(free).objective + 1e-8


def test_rmab_budget_binds():
    inst = rmab_instance(np.random.default_rng(0), budget=0.4)
    sol = solve_instance(inst)
    x = sol.slices()
    active = x[:, 1::2].sum(axis=1)
    assert np.all(active <= 0.4 + 1e-9)
