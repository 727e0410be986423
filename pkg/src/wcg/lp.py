"""Occupancy-measure LP relaxation of a WCG instance.

Variables are x_t(i, s, a) for t = 0..T, flat-indexed as ``t * |J| + j``.
The LP is independent of the scaling parameter h.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import simplex
from .core import WcgInstance

ZERO_OCCUPANCY = 1e-10


@dataclass
class LpProblem:
    c: np.ndarray  # maximisation coefficients N_i^0 r_i(s, a), tiled over t
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    num_triples: int
    horizon: int
    row_kinds: dict = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return self.c.size

    def lower(self) -> np.ndarray:
        return np.zeros(self.num_vars)

    def upper(self) -> np.ndarray:
        return np.ones(self.num_vars)

    def residuals(self, x: np.ndarray) -> dict:
        eq = np.abs(self.A_eq @ x - self.b_eq)
        ub = np.maximum(self.A_ub @ x - self.b_ub, 0.0)
        out = {"bounds": float(max(np.max(-x, initial=0.0), np.max(x - 1.0, initial=0.0)))}
        for kind, rows in self.row_kinds.items():
            if kind == "coupling":
                out[kind] = float(ub.max(initial=0.0))
            else:
                out[kind] = float(eq[rows].max(initial=0.0))
        out["primal"] = max(out.values())
        return out


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    status: str
    primal_residual: float = float("nan")
    dual_gap: float = float("nan")
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    degenerate_basics: int = 0
    infeasible_rows: list = field(default_factory=list)
    num_triples: int = 0
    horizon: int = 0

    def slices(self) -> np.ndarray:
        """x reshaped to (T + 1, |J|)."""
        return self.x.reshape(self.horizon + 1, self.num_triples)


def build_lp(instance: WcgInstance) -> LpProblem:
    idx = instance.index
    J, T, I = idx.size, instance.horizon, instance.num_gangs
    n = J * (T + 1)
    rows, cols, vals, rhs = [], [], [], []
    kinds = {}
    r = 0

    # flow: sum_{s', a'} x_t(i, s', a') p_i(s', a', s) - sum_a x_{t+1}(i, s, a) = 0
    start = r
    for t in range(T):
        for i, g in enumerate(instance.gangs):
            S, A = g.num_states, g.num_actions
            base = idx.triple_offsets[i]
            # P[a, s', s] -> coefficient of triple (s', a') in row s
            P = g.transitions
            for s in range(S):
                coef = P[:, :, s].T.ravel()  # (s', a') state-major
                nz = np.flatnonzero(coef)
                rows.extend([r] * nz.size)
                cols.extend((t * J + base + nz).tolist())
                vals.extend(coef[nz].tolist())
                nxt = (t + 1) * J + base + s * A + np.arange(A)
                rows.extend([r] * A)
                cols.extend(nxt.tolist())
                vals.extend([-1.0] * A)
                rhs.append(0.0)
                r += 1
    kinds["flow"] = np.arange(start, r)

    start = r
    for t in range(T + 1):
        for i in range(I):
            sl = idx.gang_triples(i)
            block = np.arange(sl.start, sl.stop) + t * J
            rows.extend([r] * block.size)
            cols.extend(block.tolist())
            vals.extend([1.0] * block.size)
            rhs.append(1.0)
            r += 1
    kinds["normalization"] = np.arange(start, r)

    start = r
    for i, g in enumerate(instance.gangs):
        A = g.num_actions
        for s in range(g.num_states):
            block = idx.triple_offsets[i] + s * A + np.arange(A)
            rows.extend([r] * A)
            cols.extend(block.tolist())
            vals.extend([1.0] * A)
            rhs.append(float(instance.init_dist[i][s]))
            r += 1
    kinds["initial"] = np.arange(start, r)

    A_eq = sp.csr_matrix((vals, (rows, cols)), shape=(r, n))
    b_eq = np.array(rhs)

    L = instance.num_constraints
    weighted = instance.constraint_matrix * instance.pops_per_triple  # (L, J)
    if L:
        A_ub = sp.kron(sp.identity(T + 1), sp.csr_matrix(weighted), format="csr")
    else:
        A_ub = sp.csr_matrix((0, n))
    kinds["coupling"] = np.arange(A_ub.shape[0])

    c = np.tile(instance.reward_vector * instance.pops_per_triple, T + 1)
    return LpProblem(c, A_eq, b_eq, A_ub, np.zeros(A_ub.shape[0]), J, T, kinds)


def solve_lp(problem: LpProblem, use_presolve: bool = True) -> LpSolution:
    res = simplex.solve(
        -problem.c,
        problem.A_eq,
        problem.b_eq,
        problem.A_ub,
        problem.b_ub,
        problem.lower(),
        problem.upper(),
        use_presolve=use_presolve,
    )
    if res.status == "unbounded":
        raise AssertionError("LP reported unbounded although every variable is boxed in [0, 1]")
    if res.status != "optimal":
        return LpSolution(
            res.x, float("nan"), res.status, iterations=res.iterations,
            infeasible_rows=res.infeasible_rows, num_triples=problem.num_triples,
            horizon=problem.horizon,
        )
    x = res.x
    residuals = problem.residuals(x)
    obj = float(problem.c @ x)
    gap = abs(-res.dual_objective - obj) / max(1.0, abs(obj))
    return LpSolution(
        x,
        obj,
        "optimal",
        primal_residual=residuals["primal"],
        dual_gap=gap,
        residuals=residuals,
        iterations=res.iterations,
        degenerate_basics=res.degenerate_basics,
        num_triples=problem.num_triples,
        horizon=problem.horizon,
    )


def solve_instance(instance: WcgInstance) -> LpSolution:
    return solve_lp(build_lp(instance))


@dataclass
class ActionProbabilities:
    """alpha[t, j]: probability of action a(j) given gang-state (i(j), s(j)) at time t."""

    alpha: np.ndarray

    def __getitem__(self, key):
        return self.alpha[key]

    @property
    def horizon(self) -> int:
        return self.alpha.shape[0] - 1


def action_probabilities(solution: LpSolution, instance: WcgInstance) -> ActionProbabilities:
    if solution.status != "optimal":
        raise ValueError(f"cannot derive a policy from a {solution.status} LP solution")
    idx = instance.index
    xs = np.clip(solution.slices(), 0.0, None)
    alpha = np.empty_like(xs)
    n_actions = np.array([A for _, A in idx.shapes])[idx.gang]
    for t, x in enumerate(xs):
        denom = idx.pair_sums(x)[idx.pair]
        alpha[t] = np.where(denom >= ZERO_OCCUPANCY, x / np.where(denom > 0, denom, 1.0), 1.0 / n_actions)
    return ActionProbabilities(alpha)


def deterministic_trajectory(solution: LpSolution, instance: WcgInstance) -> np.ndarray:
    """Fluid occupancy z(t) = N_i^0 x_t / sum_j N_j^0, shape (T + 1, |J|)."""
    w = instance.pops_per_triple / instance.base_pops.sum()
    return solution.slices() * w
