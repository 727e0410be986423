"""Decision rules mapping a gang-state census to per-triple action counts.

All policies work in integer count units: ``counts[j]`` is the number of
bandit processes in GSA triple j, and for every gang-state pair the counts
over actions add up to the number of processes observed in that pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FEASIBILITY_TOL, WcgError, WcgInstance, simultaneous_minimizers
from .lp import ActionProbabilities

FLOOR_EPS = 1e-9


class AdaptionExhausted(WcgError):
    """Decision adaption could not restore feasibility."""

    def __init__(self, t: int, residual: dict):
        self.t = t
        self.residual = residual
        detail = ", ".join(f"l={ell}: {v:.6g}" for ell, v in residual.items())
        super().__init__(f"decision adaption exhausted at t={t}; residual lhs {detail}")


@dataclass
class DecisionCounts:
    counts: np.ndarray  # int64 per triple
    t: int
    adapted: int = 0  # bandit processes moved by adaption

    def marginals(self, instance: WcgInstance) -> np.ndarray:
        idx = instance.index
        return np.bincount(idx.pair, weights=self.counts, minlength=idx.num_pairs).astype(np.int64)


def default_anchor(instance: WcgInstance) -> np.ndarray:
    """a^0 per triple's pair: the simultaneous minimizer, or action 0 when none exists."""
    mins = simultaneous_minimizers(instance)
    return np.concatenate([np.where(a < 0, 0, a) for a in mins]).astype(np.int64)


def majority_anchor(instance: WcgInstance, alpha: ActionProbabilities) -> np.ndarray:
    """a^0 per (t, pair): the action with the largest ᾱ (ties: lowest action)."""
    idx = instance.index
    out = np.zeros((alpha.alpha.shape[0], idx.num_pairs), dtype=np.int64)
    for k in range(idx.num_pairs):
        i, s = idx.pair_unflat(k)
        j0 = idx.flat(i, s, 0)
        out[:, k] = np.argmax(alpha.alpha[:, j0 : j0 + idx.shapes[i][1]], axis=1)
    return out


def _anchor_mask(instance: WcgInstance, anchor: np.ndarray) -> np.ndarray:
    idx = instance.index
    return idx.action == anchor[idx.pair]


def lp_approx_decide(y_counts, alpha, t, instance, anchor=None) -> DecisionCounts:
    """Floor ᾱ·Y on every non-anchor action; the anchor takes the remainder."""
    idx = instance.index
    y_counts = np.asarray(y_counts, dtype=np.int64)
    if anchor is None:
        anchor = default_anchor(instance)
    a_row = alpha[t] if isinstance(alpha, ActionProbabilities) else np.asarray(alpha)[t]
    anchor = np.asarray(anchor)
    if anchor.ndim == 2:
        anchor = anchor[t]
    is_anchor = _anchor_mask(instance, anchor)
    y_per = y_counts[idx.pair]
    counts = np.floor(a_row * y_per + FLOOR_EPS).astype(np.int64)
    counts[is_anchor] = 0
    counts = np.minimum(counts, y_per)
    assigned = np.bincount(idx.pair, weights=counts, minlength=idx.num_pairs).astype(np.int64)
    rest = y_counts - assigned
    if np.any(rest < 0):
        # only reachable if alpha sums well above one; trim the non-anchor excess
        for k in np.flatnonzero(rest < 0):
            cells = np.flatnonzero((idx.pair == k) & ~is_anchor)
            excess = -rest[k]
            for j in cells[::-1]:
                take = min(excess, counts[j])
                counts[j] -= take
                excess -= take
            rest[k] = 0
    counts[np.flatnonzero(is_anchor)] = rest[idx.pair[is_anchor]]
    return DecisionCounts(counts, t)


def build_chains(instance: WcgInstance, anchor=None) -> list:
    """Per constraint, per triple j: global indices a_1..a_M of the adaption chain, or None.

    The chain holds the actions strictly cheaper than a(j) for the constraint,
    sorted by cost, anchored at a^0 and ending at a(j). When the chain is not
    monotone for every other constraint it is replaced by (a^0, a(j)).
    """
    idx = instance.index
    if anchor is None:
        anchor = default_anchor(instance)
    F = instance.constraint_matrix
    L = instance.num_constraints
    chains = [[None] * idx.size for _ in range(L)]
    for j in range(idx.size):
        i, s, a = idx.unflat(j)
        A = idx.shapes[i][1]
        base = idx.flat(i, s, 0)
        cols = base + np.arange(A)
        a0 = int(anchor[idx.pair[j]])
        if a == a0:
            continue
        fv = F[:, cols]  # (L, A)
        for ell in range(L):
            cheaper = [b for b in range(A) if fv[ell, b] < fv[ell, a]]
            if a0 not in cheaper:
                continue
            cheaper.sort(key=lambda b: (fv[ell, b], b != a0, b))
            seq = cheaper + [a]
            diffs = np.diff(fv[:, seq], axis=1)
            if np.any(diffs < -1e-12):
                seq = [a0, a]
            chains[ell][j] = tuple(int(base + b) for b in seq)
    return chains


def fab_adapt(decision: DecisionCounts, order, instance, chains, max_passes: int = 1000):
    """Move mass along adaption chains until every constraint lhs is ≤ 0.

    ``order`` lists triples in processing order (ascending ᾱ or score). The
    input decision is not modified.
    """
    F = instance.constraint_matrix
    counts = decision.counts.copy()
    total = int(counts.sum())
    tol = FEASIBILITY_TOL * max(total, 1)
    moved = 0
    residual = {}
    for ell in range(instance.num_constraints):
        f = F[ell]
        lhs = float(counts @ f)
        if lhs <= tol:
            continue
        chain_of = chains[ell]
        cand = [j for j in order if chain_of[j] is not None]
        for _ in range(max_passes):
            progress = False
            for j in cand:
                if counts[j] == 0:
                    continue
                ch = chain_of[j]
                for m in range(len(ch) - 2, -1, -1):
                    hi, lo = ch[m + 1], ch[m]
                    df = f[hi] - f[lo]
                    if df <= 0 or counts[hi] == 0:
                        continue
                    k = math.ceil(lhs / df - 1e-9)
                    mv = min(int(counts[hi]), k)
                    counts[hi] -= mv
                    counts[lo] += mv
                    moved += mv
                    progress = True
                    lhs = float(counts @ f)
                    if lhs <= tol:
                        break
                if lhs <= tol:
                    break
            if lhs <= tol or not progress:
                break
        if lhs > tol:
            residual[ell] = lhs / max(total, 1)
    if residual:
        raise AdaptionExhausted(decision.t, residual)
    return DecisionCounts(counts, decision.t, decision.adapted + moved)


def greedy_decide(y_counts, t, instance, scores=None, tie: str = "low") -> DecisionCounts:
    """All of each pair's processes on its best-scoring action (unadapted)."""
    idx = instance.index
    if scores is None:
        scores = instance.reward_vector * instance.pops_per_triple
    counts = np.zeros(idx.size, dtype=np.int64)
    y_counts = np.asarray(y_counts, dtype=np.int64)
    for k in np.flatnonzero(y_counts):
        i, s = idx.pair_unflat(k)
        sl = slice(idx.flat(i, s, 0), idx.flat(i, s, 0) + idx.shapes[i][1])
        block = scores[sl]
        best = np.flatnonzero(block >= block.max() - 1e-12 * max(1.0, abs(block.max())))
        a = best[0] if tie == "low" else best[-1]
        counts[sl.start + a] = y_counts[k]
    return DecisionCounts(counts, t)


def priority_allocation(y, ranking, budget: float) -> np.ndarray:
    """Waterfill an activation budget down a state ranking.

    Returns the activated mass per state; the fraction of state s that is
    active is ``mass[s] / y[s]``.
    """
    if not 0.0 <= budget <= 1.0:
        raise ValueError(f"budget {budget} outside [0, 1]")
    y = np.asarray(y, dtype=float)
    mass = np.zeros_like(y)
    left = budget
    for s in ranking:
        take = min(y[s], max(left, 0.0))
        mass[s] = take
        left -= take
    return mass


def realize_actions(decision: DecisionCounts, states, instance) -> np.ndarray:
    """Per-bandit actions: within each pair, lower bandit indices take lower actions."""
    idx = instance.index
    states = np.asarray(states, dtype=np.int64)  # pair index of each bandit
    actions = np.empty(states.size, dtype=np.int64)
    order = np.argsort(states, kind="stable")
    census = np.bincount(states, minlength=idx.num_pairs)
    if not np.array_equal(census, decision.marginals(instance)):
        raise WcgError("decision marginals do not match the state census")
    starts = np.concatenate([[0], np.cumsum(census)])
    for k in np.flatnonzero(census):
        i, s = idx.pair_unflat(k)
        j0 = idx.flat(i, s, 0)
        per = decision.counts[j0 : j0 + idx.shapes[i][1]]
        actions[order[starts[k] : starts[k + 1]]] = np.repeat(np.arange(per.size), per)
    return actions


class Policy:
    """Base class: ``decide(y_counts, t)`` returns a DecisionCounts."""

    name = "policy"
    alpha: ActionProbabilities | None = None

    def decide(self, y_counts, t: int) -> DecisionCounts:
        raise NotImplementedError


class LpApproxPolicy(Policy):
    name = "lp-approx"

    def __init__(self, instance: WcgInstance, alpha: ActionProbabilities, anchor="minimizer"):
        self.instance = instance
        self.alpha = alpha
        if isinstance(anchor, str):
            if anchor == "minimizer":
                anchor = default_anchor(instance)
            elif anchor == "majority":
                anchor = majority_anchor(instance, alpha)
            else:
                raise ValueError(f"unknown anchor rule {anchor!r}")
        self.anchor = np.asarray(anchor)

    def decide(self, y_counts, t):
        return lp_approx_decide(y_counts, self.alpha, t, self.instance, self.anchor)


class FabPolicy(LpApproxPolicy):
    name = "fab"

    def __init__(self, instance: WcgInstance, alpha: ActionProbabilities, anchor="minimizer"):
        super().__init__(instance, alpha, anchor)
        # chains always end at the simultaneous minimizer so adaption can terminate
        self.chains = build_chains(instance)
        has_chain = np.array(
            [any(c[j] is not None for c in self.chains) for j in range(instance.index.size)],
            dtype=bool,
        )
        # ascending ᾱ with ties by flat index; triples without any chain never move
        self.orders = []
        for row in alpha.alpha:
            o = np.argsort(row, kind="stable")
            self.orders.append(o[has_chain[o]].tolist())

    def decide(self, y_counts, t):
        d = super().decide(y_counts, t)
        return fab_adapt(d, self.orders[t], self.instance, self.chains)


class GreedyPolicy(Policy):
    name = "greedy"

    def __init__(self, instance: WcgInstance, tie: str = "low", anchor=None):
        if tie not in ("low", "high"):
            raise ValueError("tie must be 'low' or 'high'")
        self.instance = instance
        self.tie = tie
        self.scores = instance.reward_vector * instance.pops_per_triple
        anchor = default_anchor(instance) if anchor is None else np.asarray(anchor)
        self.chains = build_chains(instance, anchor)
        o = np.argsort(self.scores, kind="stable")
        has_chain = np.array(
            [any(c[j] is not None for c in self.chains) for j in range(instance.index.size)],
            dtype=bool,
        )
        self.order = o[has_chain[o]].tolist()

    def decide(self, y_counts, t):
        d = greedy_decide(y_counts, t, self.instance, self.scores, self.tie)
        return fab_adapt(d, self.order, self.instance, self.chains)


class PriorityPolicy(Policy):
    """Index policy for a single binary-action gang: activate by ranking within a budget."""

    name = "priority"

    def __init__(self, instance: WcgInstance, ranking, budget: float):
        if instance.num_gangs != 1 or instance.gangs[0].num_actions != 2:
            raise ValueError("the priority policy needs a single gang with two actions")
        S = instance.gangs[0].num_states
        ranking = [int(s) for s in ranking]
        if sorted(ranking) != list(range(S)):
            raise ValueError(f"ranking must be a permutation of 0..{S - 1}")
        if not 0.0 <= budget <= 1.0:
            raise ValueError(f"budget {budget} outside [0, 1]")
        self.instance = instance
        self.ranking = ranking
        self.budget = float(budget)

    def decide(self, y_counts, t):
        y_counts = np.asarray(y_counts, dtype=np.int64)
        total = int(y_counts.sum())
        left = int(math.floor(self.budget * total + FLOOR_EPS))
        counts = np.zeros(2 * y_counts.size, dtype=np.int64)
        for s in self.ranking:
            on = min(int(y_counts[s]), left)
            left -= on
            counts[2 * s + 1] = on
            counts[2 * s] = y_counts[s] - on
        return DecisionCounts(counts, t)


def make_policy(kind: str, instance: WcgInstance, alpha=None, **options) -> Policy:
    """Build a policy by CLI name; ``options`` may hold anchor, tie, ranking, budget."""
    if kind in ("fab", "lp-approx"):
        if alpha is None:
            raise ValueError(f"policy {kind!r} needs action probabilities")
        cls = FabPolicy if kind == "fab" else LpApproxPolicy
        return cls(instance, alpha, anchor=options.get("anchor", "minimizer"))
    if kind == "greedy":
        return GreedyPolicy(instance, tie=options.get("tie", "low"))
    if kind == "priority":
        if options.get("ranking") is None or options.get("budget") is None:
            raise ValueError("policy 'priority' needs a ranking and a budget")
        return PriorityPolicy(instance, options["ranking"], options["budget"])
    raise ValueError(f"unknown policy {kind!r}")
