import math

import numpy as np
import pytest
from scipy.stats import poisson

from wcg.appendix_g import AppendixGConfig, arrival_state, generate_appendix_g, poisson_truncated
from wcg.core import OccupancyCounts, check_hard_constraints, validate_instance
from wcg.io import instance_to_dict


def test_shapes(appendix_g):
    assert appendix_g.num_gangs == 5
    assert appendix_g.num_constraints == 6
    assert appendix_g.horizon == 30
    assert [g.num_states for g in appendix_g.gangs] == [2, 3, 3, 4, 31 * 31]
    assert appendix_g.index.size == 999


def test_reward_example(appendix_g):
    # 110.3085 * 1 * 0.3 minus the flat charge 1.0789 * 3 + 0.1523 * 1
    r = appendix_g.gangs[0].rewards
    assert r[1, 0] == pytest.approx(29.70355, abs=1e-9)
    assert r[1, 1] == pytest.approx(29.70355, abs=1e-9)


def test_usage_scaled_variant_changes_cost():
    inst = generate_appendix_g(AppendixGConfig(usage_scaled_cost=True))
    r = inst.gangs[0].rewards
    assert r[1, 0] == pytest.approx(110.3085 * 0.3 - 3.389, abs=1e-9)  # one unit held
    assert r[0, 0] == 0.0  # nothing held, nothing charged


def test_arrival_probability_example(appendix_g):
    P = appendix_g.gangs[4].transitions
    p = P[0, arrival_state(0, 0, 30), arrival_state(0, 1, 30)]
    assert p == pytest.approx(math.exp(-10), rel=1e-12)


def test_capacity_coefficient_example(appendix_g):
    f = appendix_g.constraints.values[1]
    assert f[1, 1, 1] == 0.0


def test_admission_constraint_values(appendix_g):
    f0 = appendix_g.constraints.values[0][0]
    assert f0.tolist() == [[0, 1], [0, 0]]
    f5 = appendix_g.constraints.values[4][0]
    assert f5[arrival_state(7, 3, 30), 0] == -7


def test_capacity_violation_detected(appendix_g):
    idx = appendix_g.index
    c = np.zeros(idx.size, dtype=np.int64)
    c[idx.flat(2, 1, 1)] = 5
    lhs = dict((ell, (v, ok)) for ell, v, ok in check_hard_constraints(OccupancyCounts(1, c), appendix_g))
    assert not lhs[1][1]
    # 3 * 2 * 5 = 30 units against a pool-0 capacity of 8 shared over four services
    assert lhs[1][0] == pytest.approx((30 - 5 * 2) / 5)


def test_rows_sum_to_one_exactly(appendix_g):
    P = appendix_g.gangs[4].transitions[0]
    for row in P:
        assert math.fsum(row) == 1.0
        assert row.min() >= 0.0


def test_poisson_tail_folding():
    p = poisson_truncated(10.0)
    assert p.size == 31
    assert p[:30] == pytest.approx(poisson.pmf(np.arange(30), 10.0), rel=1e-12)
    assert p[30] == pytest.approx(poisson.sf(29, 10.0), abs=1e-12)
    zero = poisson_truncated(0.0)
    assert zero[0] == 1.0 and zero[1:].sum() == 0.0


def test_generator_is_deterministic():
    a = instance_to_dict(generate_appendix_g())
    b = instance_to_dict(generate_appendix_g())
    assert a == b


def test_cheap_action_condition(appendix_g):
    rep = validate_instance(appendix_g)
    assert rep.ok and rep.cheap_actions


def test_horizon_is_bounded_by_rate_table():
    with pytest.raises(ValueError):
        AppendixGConfig(horizon=31)
