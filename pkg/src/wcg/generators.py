"""Random and toy instance generators used by the test suites."""

from __future__ import annotations

import numpy as np

from .core import ConstraintTable, GangSpec, WcgInstance


def random_stochastic(rng: np.random.Generator, shape, sparsity: float = 0.0) -> np.ndarray:
    """Row-stochastic array over the last axis; entries zeroed with probability ``sparsity``."""
    P = rng.random(shape)
    if sparsity:
        P *= rng.random(shape) >= sparsity
        empty = P.sum(axis=-1) == 0
        # keep every row non-empty
        P[empty, 0] = 1.0
    P /= P.sum(axis=-1, keepdims=True)
    # exact row sums after normalisation
    P[..., -1] = 1.0 - P[..., :-1].sum(axis=-1)
    P = np.clip(P, 0.0, 1.0)
    return P


def random_instance(
    rng: np.random.Generator,
    num_gangs=None,
    max_states: int = 3,
    max_actions: int = 3,
    num_constraints=None,
    horizon=None,
    base_pops=None,
    init_scale=None,
) -> WcgInstance:
    """An instance with a feasible simultaneous minimizer in every state.

    For each (gang, state) a random action is made the simultaneous minimizer
    of every constraint, with a non-positive value, so the all-minimizer
    profile is feasible from any census. With ``init_scale`` = n the initial
    distribution of gang i is a multiple of 1/(n N_i^0).
    """
    I = num_gangs or int(rng.integers(1, 4))
    L = int(rng.integers(0, 3)) if num_constraints is None else num_constraints
    T = int(rng.integers(0, 4)) if horizon is None else horizon
    pops = np.asarray(base_pops if base_pops is not None else rng.integers(1, 3, size=I))
    gangs, fvals, init = [], [], []
    for i in range(I):
        S = int(rng.integers(1, max_states + 1))
        A = int(rng.integers(1, max_actions + 1))
        P = random_stochastic(rng, (A, S, S), sparsity=0.3)
        r = np.round(rng.normal(size=(S, A)) * 2, 3)
        gangs.append(GangSpec(P, r))
        f = np.round(rng.uniform(-1, 1, size=(L, S, A)), 3)
        amin = rng.integers(0, A, size=S)
        for s in range(S):
            for ell in range(L):
                low = min(f[ell, s].min(), 0.0) - float(rng.uniform(0, 0.5))
                f[ell, s, amin[s]] = round(low, 3)
        fvals.append(f)
        if init_scale:
            n = int(init_scale * pops[i])
            cuts = np.sort(rng.integers(0, n + 1, size=S - 1))
            counts = np.diff(np.concatenate([[0], cuts, [n]]))
            init.append(counts / n)
        else:
            y = rng.random(S)
            init.append(y / y.sum())
    return WcgInstance(tuple(gangs), ConstraintTable(tuple(fvals), L), T, pops, tuple(init), name="random")


def hand_lp_instance() -> WcgInstance:
    """One gang, two states, two actions, horizon one, action-1 budget of one half.

    Action 1 moves to state 1, action 0 stays; the reward is the state. The
    constraint reads sum x_t(s, 1) <= 0.5, i.e. f(s, a) = a - 0.5.
    """
    stay = np.eye(2)
    move = np.array([[0.0, 1.0], [0.0, 1.0]])
    P = np.stack([stay, move])
    r = np.array([[0.0, 0.0], [1.0, 1.0]])
    g = GangSpec(P, r)
    f = np.array([[[-0.5, 0.5], [-0.5, 0.5]]])
    return WcgInstance((g,), ConstraintTable((f,), 1), 1, np.array([1]), (np.array([1.0, 0.0]),), name="hand")


def rmab_instance(rng: np.random.Generator, num_states: int = 3, budget: float = 0.4, horizon: int = 3):
    """Single binary-action gang with an activation budget: f(s, a) = a - budget."""
    P = random_stochastic(rng, (2, num_states, num_states))
    r = np.round(rng.random((num_states, 2)), 3)
    g = GangSpec(P, r)
    f = np.zeros((1, num_states, 2))
    f[0, :, 0] = -budget
    f[0, :, 1] = 1.0 - budget
    y = np.full(num_states, 1.0 / num_states)
    return WcgInstance((g,), ConstraintTable((f,), 1), horizon, np.array([1]), (y,), name="rmab")
