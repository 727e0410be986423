"""Exact optimum of small scaled instances by backward induction over the joint census."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np
from scipy.stats import multinomial

from .core import FEASIBILITY_TOL, WcgError, WcgInstance, scale_initial_counts

DEFAULT_CAP = 10**6
# infeasible marker kept finite so that zero probabilities do not produce NaN
_INFEASIBLE = -1e200


class OracleCapExceeded(WcgError):
    pass


@dataclass
class OracleResult:
    value: float  # optimum per unit h; -inf when no feasible policy exists
    feasible: bool
    joint_states: int
    state_time_pairs: int
    runtime: float
    h: int


def compositions(n: int, k: int) -> list:
    """All k-tuples of non-negative integers summing to n, in lexicographic order."""
    if k == 1:
        return [(n,)]
    out = []
    for first in range(n, -1, -1):
        for rest in compositions(n - first, k - 1):
            out.append((first,) + rest)
    return out[::-1]


def _count_compositions(n: int, k: int) -> int:
    from math import comb

    return comb(n + k - 1, k - 1)


class _GangModel:
    """Census space and decision options of one gang at a fixed population."""

    def __init__(self, instance: WcgInstance, i: int, n: int):
        g = instance.gangs[i]
        S, A = g.num_states, g.num_actions
        self.censuses = compositions(n, S)
        self.cid = {c: k for k, c in enumerate(self.censuses)}
        F = instance.constraints.values[i]  # (L, S, A)
        P = g.transitions
        r = g.rewards
        L = F.shape[0]
        cell_next = {}
        self.options = []
        for census in self.censuses:
            per_state = [compositions(c, A) for c in census]
            R, Fv, Pn = [], [], []
            for choice in itertools.product(*per_state):
                counts = np.array(choice, dtype=np.int64)  # (S, A)
                R.append(float(np.sum(counts * r)))
                Fv.append(np.einsum("lsa,sa->l", F, counts) if L else np.zeros(0))
                dist = {(): 1.0}
                for s in range(S):
                    for a in range(A):
                        c = int(counts[s, a])
                        if c == 0:
                            continue
                        key = (s, a, c)
                        if key not in cell_next:
                            cell_next[key] = self._cell_distribution(P[a, s], c)
                        dist = _convolve(dist, cell_next[key])
                vec = np.zeros(len(self.censuses))
                for nxt, p in dist.items():
                    full = tuple(nxt) + (0,) * (S - len(nxt)) if nxt else (0,) * S
                    vec[self.cid[full]] += p
                Pn.append(vec)
            self.options.append(
                (np.array(R), np.array(Fv).reshape(len(R), L), np.array(Pn))
            )

    @staticmethod
    def _cell_distribution(p: np.ndarray, c: int) -> dict:
        S = p.size
        out = {}
        for comp in compositions(c, S):
            prob = float(multinomial.pmf(comp, c, p))
            if prob > 0:
                out[comp] = prob
        return out


def _convolve(a: dict, b: dict) -> dict:
    out = {}
    for ka, pa in a.items():
        for kb, pb in b.items():
            if not ka:
                key = kb
            else:
                key = tuple(x + y for x, y in zip(ka, kb))
            out[key] = out.get(key, 0.0) + pa * pb
    return out


def exact_oracle(instance: WcgInstance, h: int, cap: int = DEFAULT_CAP) -> OracleResult:
    """Optimal expected total reward per unit h over policies obeying the per-step constraints."""
    start = time.perf_counter()
    T = instance.horizon
    pops = [int(h * n0) for n0 in instance.base_pops]
    sizes = [_count_compositions(n, g.num_states) for n, g in zip(pops, instance.gangs)]
    joint = int(np.prod(sizes))
    pairs = joint * (T + 1)
    if pairs > cap:
        raise OracleCapExceeded(f"{pairs} state-time pairs exceed the cap {cap}")

    models = [_GangModel(instance, i, n) for i, n in enumerate(pops)]
    total = sum(pops)
    tol = FEASIBILITY_TOL * max(total, 1)
    V = np.zeros(sizes)  # value after the last decision
    for t in range(T, -1, -1):
        newV = np.full(sizes, _INFEASIBLE)
        for state in itertools.product(*(range(s) for s in sizes)):
            opts = [m.options[k] for m, k in zip(models, state)]
            # expected continuation for every joint decision
            cont = V
            for g, (_, _, Pn) in enumerate(opts):
                cont = np.moveaxis(np.tensordot(cont, Pn, axes=([g], [1])), -1, g)
            reward = sum(
                np.reshape(R, [-1 if gi == g else 1 for gi in range(len(opts))])
                for g, (R, _, _) in enumerate(opts)
            )
            value = reward + cont
            L = instance.num_constraints
            if L:
                lhs = sum(
                    np.reshape(Fv, [-1 if gi == g else 1 for gi in range(len(opts))] + [L])
                    for g, (_, Fv, _) in enumerate(opts)
                )
                value = np.where(np.all(lhs <= tol, axis=-1), value, _INFEASIBLE)
            best = value.max()
            newV[state] = best if best > _INFEASIBLE / 2 else _INFEASIBLE
        V = newV

    census = scale_initial_counts(instance, h)
    idx = instance.index
    init = tuple(
        models[i].cid[tuple(int(v) for v in census[idx.gang_pairs(i)])]
        for i in range(instance.num_gangs)
    )
    best = float(V[init])
    feasible = best > _INFEASIBLE / 2
    return OracleResult(
        value=best / h if feasible else -np.inf,
        feasible=feasible,
        joint_states=joint,
        state_time_pairs=pairs,
        runtime=time.perf_counter() - start,
        h=h,
    )
