"""Problem data model for weakly coupled gangs of restless bandit processes.

A gang is a population of statistically identical finite MDPs. Gangs only
interact through per-step linear constraints on how many of their members
occupy each (state, action) pair. Occupancies are kept as exact integer
counts; fractional views are derived on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

STOCHASTIC_TOL = 1e-12
FEASIBILITY_TOL = 1e-9


class WcgError(Exception):
    """Base class for errors raised by this package."""


class InstanceError(WcgError):
    """Structurally malformed instance (shapes, negative probabilities, ...)."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GangSpec:
    """One gang: transitions[a, s, s'] and rewards[s, a]."""

    transitions: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        P = _frozen(self.transitions)
        r = _frozen(self.rewards)
        if P.ndim != 3 or P.shape[1] != P.shape[2]:
            raise InstanceError(f"transitions must have shape (A, S, S), got {P.shape}")
        if r.shape != (P.shape[1], P.shape[0]):
            raise InstanceError(
                f"rewards must have shape (S, A) = {(P.shape[1], P.shape[0])}, got {r.shape}"
            )
        if not np.all(np.isfinite(P)) or not np.all(np.isfinite(r)):
            raise InstanceError("transitions and rewards must be finite")
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", r)

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[0]


@dataclass(frozen=True)
class ConstraintTable:
    """values[i] has shape (L, S_i, A_i) and holds f_{i,l}(s, a)."""

    values: tuple
    num_constraints: int

    @classmethod
    def empty(cls, gangs: Sequence[GangSpec]) -> "ConstraintTable":
        return cls(
            tuple(np.zeros((0, g.num_states, g.num_actions)) for g in gangs), 0
        )

    @classmethod
    def from_nested(cls, nested, gangs: Sequence[GangSpec]) -> "ConstraintTable":
        """Build from the JSON layout constraints[l][i][s][a]."""
        L = len(nested)
        values = []
        for i, g in enumerate(gangs):
            try:
                arr = np.array([nested[l][i] for l in range(L)], dtype=float)
                values.append(arr.reshape(L, g.num_states, g.num_actions))
            except (ValueError, IndexError) as exc:
                raise InstanceError(f"constraint table for gang {i} is malformed: {exc}")
        return cls(tuple(values), L)

    def __post_init__(self):
        vals = tuple(_frozen(v) for v in self.values)
        for v in vals:
            if v.ndim != 3 or v.shape[0] != self.num_constraints:
                raise InstanceError(
                    f"constraint table entry has shape {v.shape}, expected ({self.num_constraints}, S, A)"
                )
            if not np.all(np.isfinite(v)):
                raise InstanceError("constraint functions must be bounded (finite)")
        object.__setattr__(self, "values", vals)

    def to_nested(self) -> list:
        return [[v[l].tolist() for v in self.values] for l in range(self.num_constraints)]


class GsaIndex:
    """Flat indexing of gang-state-action triples and gang-state pairs.

    Triples of gang i occupy a contiguous block, state-major:
    ``flat(i, s, a) = offset[i] + s * A_i + a``.
    """

    def __init__(self, shapes: Sequence[tuple[int, int]]):
        self.shapes = [(int(S), int(A)) for S, A in shapes]
        sizes = [S * A for S, A in self.shapes]
        self.triple_offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.pair_offsets = np.concatenate(
            [[0], np.cumsum([S for S, _ in self.shapes])]
        ).astype(np.int64)
        self.size = int(self.triple_offsets[-1])
        self.num_pairs = int(self.pair_offsets[-1])

        gang, state, action = [], [], []
        for i, (S, A) in enumerate(self.shapes):
            gang.append(np.full(S * A, i))
            state.append(np.repeat(np.arange(S), A))
            action.append(np.tile(np.arange(A), S))
        self.gang = np.concatenate(gang).astype(np.int64)
        self.state = np.concatenate(state).astype(np.int64)
        self.action = np.concatenate(action).astype(np.int64)
        self.pair = self.pair_offsets[self.gang] + self.state
        self.pair_gang = np.concatenate(
            [np.full(S, i) for i, (S, _) in enumerate(self.shapes)]
        ).astype(np.int64)

    def __len__(self) -> int:
        return self.size

    def flat(self, i: int, s: int, a: int) -> int:
        S, A = self.shapes[i]
        if not (0 <= s < S and 0 <= a < A):
            raise IndexError(f"({i}, {s}, {a}) is not a valid triple")
        return int(self.triple_offsets[i] + s * A + a)

    def unflat(self, j: int) -> tuple[int, int, int]:
        return int(self.gang[j]), int(self.state[j]), int(self.action[j])

    def pair_flat(self, i: int, s: int) -> int:
        if not 0 <= s < self.shapes[i][0]:
            raise IndexError(f"({i}, {s}) is not a valid gang-state pair")
        return int(self.pair_offsets[i] + s)

    def pair_unflat(self, k: int) -> tuple[int, int]:
        i = int(self.pair_gang[k])
        return i, int(k - self.pair_offsets[i])

    def gang_triples(self, i: int) -> slice:
        return slice(int(self.triple_offsets[i]), int(self.triple_offsets[i + 1]))

    def gang_pairs(self, i: int) -> slice:
        return slice(int(self.pair_offsets[i]), int(self.pair_offsets[i + 1]))

    def pair_sums(self, per_triple: np.ndarray) -> np.ndarray:
        """Sum a per-triple vector over actions, giving a per-pair vector."""
        return np.bincount(self.pair, weights=per_triple, minlength=self.num_pairs)


@dataclass(frozen=True)
class WcgInstance:
    gangs: tuple
    constraints: ConstraintTable
    horizon: int
    base_pops: np.ndarray
    init_dist: tuple
    name: str = ""

    def __post_init__(self):
        gangs = tuple(self.gangs)
        if len(gangs) < 1:
            raise InstanceError("an instance needs at least one gang")
        if int(self.horizon) < 0:
            raise InstanceError("horizon must be non-negative")
        pops = np.array(self.base_pops, dtype=np.int64)
        if pops.shape != (len(gangs),) or np.any(pops < 1):
            raise InstanceError("base_pops must hold one positive integer per gang")
        pops.setflags(write=False)
        if len(self.init_dist) != len(gangs):
            raise InstanceError("init_dist must hold one distribution per gang")
        dists = []
        for i, (g, y) in enumerate(zip(gangs, self.init_dist)):
            y = _frozen(y)
            if y.shape != (g.num_states,):
                raise InstanceError(f"init_dist[{i}] has shape {y.shape}, expected ({g.num_states},)")
            dists.append(y)
        if len(self.constraints.values) != len(gangs):
            raise InstanceError("constraint table does not cover every gang")
        for i, (g, v) in enumerate(zip(gangs, self.constraints.values)):
            if v.shape[1:] != (g.num_states, g.num_actions):
                raise InstanceError(
                    f"constraint table for gang {i} has shape {v.shape[1:]}, "
                    f"expected {(g.num_states, g.num_actions)}"
                )
        object.__setattr__(self, "gangs", gangs)
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "base_pops", pops)
        object.__setattr__(self, "init_dist", tuple(dists))

    @property
    def num_gangs(self) -> int:
        return len(self.gangs)

    @property
    def num_constraints(self) -> int:
        return self.constraints.num_constraints

    @cached_property
    def index(self) -> GsaIndex:
        return GsaIndex([(g.num_states, g.num_actions) for g in self.gangs])

    @cached_property
    def reward_vector(self) -> np.ndarray:
        """r_i(s, a) laid out over flat triples."""
        return _frozen(np.concatenate([g.rewards.ravel() for g in self.gangs]))

    @cached_property
    def constraint_matrix(self) -> np.ndarray:
        """f_{i,l}(s, a) as an (L, |J|) array."""
        L = self.num_constraints
        return _frozen(
            np.concatenate([v.reshape(L, -1) for v in self.constraints.values], axis=1)
            if L
            else np.zeros((0, self.index.size))
        )

    @cached_property
    def pops_per_triple(self) -> np.ndarray:
        return _frozen(self.base_pops[self.index.gang], dtype=np.int64)

    def total_population(self, h: int) -> int:
        return int(h * self.base_pops.sum())


@dataclass
class OccupancyCounts:
    """Number of bandit processes in each GSA triple at time t, scale h."""

    h: int
    counts: np.ndarray
    t: int = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def z(self) -> np.ndarray:
        """Fraction of all bandit processes in each triple."""
        return self.counts / self.total

    def y_counts(self, index: GsaIndex) -> np.ndarray:
        return np.bincount(index.pair, weights=self.counts, minlength=index.num_pairs).astype(
            np.int64
        )

    def y(self, index: GsaIndex) -> np.ndarray:
        return self.y_counts(index) / self.total


@dataclass
class ValidationReport:
    stochastic_residuals: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    minimizers: list = field(default_factory=list)
    minimizers_present: bool = True
    minimizer_profile_ok_at_init: bool = True
    minimizer_profile_ok_everywhere: bool = True
    initial_lhs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    degenerate_gangs: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def cheap_actions(self) -> bool:
        return self.minimizers_present and self.minimizer_profile_ok_at_init

    def max_residual(self) -> float:
        return max((r for *_, r in self.stochastic_residuals), default=0.0)

    def lines(self) -> list[str]:
        out = [f"max row-sum residual: {self.max_residual():.3e}"]
        out += [f"ERROR: {e}" for e in self.errors]
        out += [f"WARNING: {w}" for w in self.warnings]
        out.append(
            "simultaneous minimizers: "
            + ("present for every (gang, state)" if self.minimizers_present else "MISSING")
        )
        out.append(f"all-minimizer profile feasible at init: {self.minimizer_profile_ok_at_init}")
        out.append(f"all-minimizer profile feasible in every state: {self.minimizer_profile_ok_everywhere}")
        if self.degenerate_gangs:
            out.append(f"single-action gangs: {self.degenerate_gangs}")
        return out


def simultaneous_minimizers(instance: WcgInstance, tol: float = 1e-12) -> list:
    """Per gang, an int array a_i(s) minimizing every f_{i,l}(s, .) at once (-1 if none)."""
    result = []
    for v in instance.constraints.values:
        L, S, A = v.shape
        if L == 0:
            result.append(np.zeros(S, dtype=np.int64))
            continue
        mins = v.min(axis=2, keepdims=True)
        ok = np.all(v <= mins + tol * np.maximum(1.0, np.abs(mins)), axis=0)
        a = np.where(ok.any(axis=1), ok.argmax(axis=1), -1)
        result.append(a.astype(np.int64))
    return result


def validate_instance(instance: WcgInstance) -> ValidationReport:
    rep = ValidationReport()
    for i, g in enumerate(instance.gangs):
        P = g.transitions
        if np.any(P < 0) or np.any(P > 1):
            bad = np.argwhere((P < 0) | (P > 1))[0]
            rep.errors.append(
                f"gang {i} action {bad[0]} row {bad[1]}: entry {P[tuple(bad)]!r} outside [0, 1]"
            )
        sums = P.sum(axis=2)
        for a in range(P.shape[0]):
            for s in range(P.shape[1]):
                res = abs(sums[a, s] - 1.0)
                rep.stochastic_residuals.append((i, a, s, res))
                if res > STOCHASTIC_TOL:
                    rep.errors.append(
                        f"gang {i} action {a} row {s}: row sum {sums[a, s]!r} (residual {res:.3e})"
                    )
        y = instance.init_dist[i]
        if np.any(y < 0) or abs(y.sum() - 1.0) > STOCHASTIC_TOL:
            rep.errors.append(f"init_dist[{i}] is not a probability vector (sum {y.sum()!r})")
        if g.num_actions == 1:
            rep.degenerate_gangs.append(i)

    mins = simultaneous_minimizers(instance)
    rep.minimizers = mins
    for i, a in enumerate(mins):
        for s in np.flatnonzero(a < 0):
            rep.minimizers_present = False
            rep.warnings.append(f"gang {i} state {s}: no action minimizes every constraint")

    L = instance.num_constraints
    if L and rep.minimizers_present:
        init = np.zeros(L)
        worst = np.zeros(L)
        for i, (v, a) in enumerate(zip(instance.constraints.values, mins)):
            at_min = v[:, np.arange(v.shape[1]), a]  # (L, S)
            n0 = instance.base_pops[i]
            init += n0 * at_min @ instance.init_dist[i]
            worst += n0 * at_min.max(axis=1)
        rep.initial_lhs = init
        rep.minimizer_profile_ok_at_init = bool(np.all(init <= FEASIBILITY_TOL))
        rep.minimizer_profile_ok_everywhere = bool(np.all(worst <= FEASIBILITY_TOL))
        if not rep.minimizer_profile_ok_at_init:
            rep.warnings.append(
                "all-minimizer action profile violates constraints "
                f"{np.flatnonzero(init > FEASIBILITY_TOL).tolist()} at the initial distribution"
            )
    elif L:
        rep.minimizer_profile_ok_at_init = False
        rep.minimizer_profile_ok_everywhere = False
    return rep


def constraint_lhs(counts: OccupancyCounts, instance: WcgInstance, ell: int) -> float:
    """Left-hand side of constraint ``ell`` in occupancy units, sum_J Z f."""
    if not 0 <= ell < instance.num_constraints:
        raise IndexError(f"constraint index {ell} out of range [0, {instance.num_constraints})")
    f = instance.constraint_matrix[ell]
    return float(counts.counts @ f) / counts.total


def check_hard_constraints(counts: OccupancyCounts, instance: WcgInstance) -> list:
    out = []
    for ell in range(instance.num_constraints):
        lhs = constraint_lhs(counts, instance, ell)
        out.append((ell, lhs, lhs <= FEASIBILITY_TOL))
    return out


def largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    """Apportion ``total`` integer units proportionally to ``weights`` (ties: lower index)."""
    target = np.asarray(weights, dtype=float) * total
    base = np.floor(target + 1e-12).astype(np.int64)
    short = int(total - base.sum())
    if short > 0:
        frac = target - base
        order = np.argsort(-frac, kind="stable")
        base[order[:short]] += 1
    elif short < 0:
        raise ValueError("weights sum to more than one")
    return base


def scale_initial_counts(instance: WcgInstance, h: int) -> np.ndarray:
    """Integer state census over gang-state pairs at scale h."""
    if h < 1:
        raise ValueError("h must be a positive integer")
    parts = [
        largest_remainder(y, int(h * n0))
        for y, n0 in zip(instance.init_dist, instance.base_pops)
    ]
    return np.concatenate(parts)
