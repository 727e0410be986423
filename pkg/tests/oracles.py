"""Independent reference computations shared by the test modules."""

import itertools

import numpy as np


def vertex_enumeration(c, A_eq, b_eq, A_ub, b_ub):
    """max c x over {A_eq x = b_eq, A_ub x <= b_ub, 0 <= x <= 1} by trying every active set."""
    n = c.size
    G = np.vstack([A_ub, -np.eye(n), np.eye(n)])
    h = np.concatenate([b_ub, np.zeros(n), np.ones(n)])
    need = n - np.linalg.matrix_rank(A_eq)
    best = -np.inf
    for active in itertools.combinations(range(G.shape[0]), need):
        M = np.vstack([A_eq, G[list(active)]])
        rhs = np.concatenate([b_eq, h[list(active)]])
        if np.linalg.matrix_rank(M) < n:
            continue
        x = np.linalg.lstsq(M, rhs, rcond=None)[0]
        if np.abs(A_eq @ x - b_eq).max() > 1e-9 or np.any(G @ x > h + 1e-9):
            continue
        best = max(best, float(c @ x))
    return best


def hand_lp_by_hand():
    """The hand instance written out directly: x = [x0(0,0), x0(0,1), x0(1,0), x0(1,1), x1(...)]."""
    c = np.array([0, 0, 1, 1, 0, 0, 1, 1], dtype=float)
    A_eq = np.array([
        [1, 1, 0, 0, 0, 0, 0, 0],  # initial state 0 mass
        [0, 0, 1, 1, 0, 0, 0, 0],  # initial state 1 mass
        [1, 0, 0, 0, -1, -1, 0, 0],  # only staying keeps state 0
        [0, 1, 1, 1, 0, 0, -1, -1],  # moving or already there lands in state 1
    ], dtype=float)
    b_eq = np.array([1.0, 0.0, 0.0, 0.0])
    A_ub = np.array([
        [0, 1, 0, 1, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, 1, 0, 1],
    ], dtype=float)
    b_ub = np.array([0.5, 0.5])
    return c, A_eq, b_eq, A_ub, b_ub
