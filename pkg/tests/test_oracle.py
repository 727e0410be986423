import numpy as np
import pytest

from wcg.core import ConstraintTable, GangSpec, WcgInstance
from wcg.lp import solve_instance
from wcg.oracle import OracleCapExceeded, compositions, exact_oracle


def single_bandit_dp(P, r, T, s0):
    """Plain finite-horizon DP for one bandit; P is (A, S, S), r is (S, A)."""
    V = np.zeros(r.shape[0])
    for _ in range(T + 1):
        Q = r + np.einsum("ast,t->sa", P, V)
        V = Q.max(axis=1)
    return V[s0]


def test_compositions():
    assert compositions(2, 2) == [(0, 2), (1, 1), (2, 0)]
    assert len(compositions(4, 3)) == 15
    assert all(sum(c) == 4 for c in compositions(4, 3))


def test_decoupled_single_bandit_equals_dp():
    rng = np.random.default_rng(2)
    for _ in range(10):
        P = rng.random((2, 2, 2))
        P /= P.sum(axis=-1, keepdims=True)
        r = rng.normal(size=(2, 2))
        g = GangSpec(P, r)
        inst = WcgInstance((g,), ConstraintTable.empty((g,)), 1, np.array([1]), (np.array([1.0, 0.0]),))
        res = exact_oracle(inst, 1)
        assert res.feasible
        assert res.value == pytest.approx(single_bandit_dp(P, r, 1, 0), rel=1e-12)
        # without coupling the LP is exact
        assert res.value == pytest.approx(solve_instance(inst).objective, rel=1e-9)


def _budget_toy():
    stay = np.eye(2)
    move = np.array([[0.2, 0.8], [0.0, 1.0]])
    P = np.stack([stay, move])
    r = np.array([[0.0, -0.1], [1.0, 0.9]])
    g = GangSpec(P, r)
    f = np.array([[[-0.5, 0.5], [-0.5, 0.5]]])  # at most one of the two bandits active
    return WcgInstance((g, g), ConstraintTable((f, f), 1), 2, np.array([1, 1]),
                       (np.array([1.0, 0.0]), np.array([1.0, 0.0])))


def test_toy_oracle_below_lp_bound():
    inst = _budget_toy()
    gamma = solve_instance(inst).objective
    for h in (1, 2, 3):
        res = exact_oracle(inst, h)
        assert res.feasible
        assert res.value <= gamma * (1 + 1e-6) + 1e-9


def test_infeasible_at_start():
    g = GangSpec(np.stack([np.eye(2)] * 2), np.zeros((2, 2)))
    f = np.ones((1, 2, 2))
    inst = WcgInstance((g,), ConstraintTable((f,), 1), 1, np.array([1]), (np.array([1.0, 0.0]),))
    res = exact_oracle(inst, 1)
    assert not res.feasible and res.value == -np.inf


def test_cap_exceeded():
    with pytest.raises(OracleCapExceeded):
        exact_oracle(_budget_toy(), 2, cap=26)


def test_sizes_reported():
    res = exact_oracle(_budget_toy(), 2)
    # three censuses of two bandits over two states per gang
    assert res.joint_states == 9
    assert res.state_time_pairs == 27
