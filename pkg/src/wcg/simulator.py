"""Seeded Monte Carlo episodes of the scaled process and their aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import FEASIBILITY_TOL, WcgError, WcgInstance, scale_initial_counts
from .policies import Policy

Z95 = float(stats.norm.ppf(0.975))


class FeasibilityViolation(WcgError):
    pass


class InsufficientData(WcgError):
    pass


def child_seed(master_seed: int, rep: int) -> np.random.SeedSequence:
    """Seed of replication ``rep``: SeedSequence entropy (master_seed, rep)."""
    return np.random.SeedSequence([int(master_seed), int(rep)])


@dataclass
class EpisodeResult:
    total_reward: float  # already divided by h
    counts: np.ndarray  # (T + 1, |J|) decision counts
    census: np.ndarray  # (T + 1, num_pairs) state counts before deciding
    slack: np.ndarray  # (T + 1, L) constraint lhs per step, occupancy units
    adapted: np.ndarray  # (T + 1,) processes moved by adaption
    h: int
    total: int
    max_deviation: float = float("nan")
    balance_deviation: float = float("nan")

    def z(self) -> np.ndarray:
        return self.counts / self.total

    def y(self) -> np.ndarray:
        return self.census / self.total


class _Transitions:
    """Per-triple successor supports and probabilities, and pair offsets."""

    def __init__(self, instance: WcgInstance):
        idx = instance.index
        self.support = []
        self.probs = []
        for j in range(idx.size):
            i, s, a = idx.unflat(j)
            row = instance.gangs[i].transitions[a, s]
            nz = np.flatnonzero(row)
            p = row[nz]
            self.support.append(idx.pair_offsets[i] + nz)
            self.probs.append(p / p.sum())


_TRANSITION_CACHE: dict = {}


def _transitions(instance: WcgInstance) -> _Transitions:
    key = id(instance)
    hit = _TRANSITION_CACHE.get(key)
    if hit is None or hit[0] is not instance:
        hit = (instance, _Transitions(instance))
        _TRANSITION_CACHE[key] = hit
    return hit[1]


def max_deviation(trajectory, reference) -> float:
    """max over t of the sup-norm distance between two (T + 1, |J|) occupancy arrays."""
    trajectory = np.asarray(trajectory, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if trajectory.shape != reference.shape:
        raise ValueError(f"shape mismatch {trajectory.shape} vs {reference.shape}")
    return float(np.max(np.abs(trajectory - reference), initial=0.0))


def balance_deviation(counts, census, alpha, instance) -> float:
    """max over t and triples of |count - ᾱ·Ycount| / (h ΣN^0)."""
    pair = instance.index.pair
    total = counts[0].sum()
    return float(np.max(np.abs(counts - alpha * census[:, pair]))) / total


def run_episode(instance, h, policy: Policy, seed=0, reference=None, check=True) -> EpisodeResult:
    """Simulate one episode from the scaled initial census.

    ``seed`` is an int or a SeedSequence. ``reference`` is an optional
    (T + 1, |J|) occupancy trajectory for the max-deviation statistic.
    """
    idx = instance.index
    T = instance.horizon
    rng = np.random.default_rng(seed)
    tr = _transitions(instance)
    F = instance.constraint_matrix
    r = instance.reward_vector
    total = instance.total_population(h)
    tol = FEASIBILITY_TOL * total

    census = scale_initial_counts(instance, h)
    gang_totals = np.bincount(idx.pair_gang, weights=census, minlength=instance.num_gangs)
    counts_hist = np.zeros((T + 1, idx.size), dtype=np.int64)
    census_hist = np.zeros((T + 1, idx.num_pairs), dtype=np.int64)
    slack = np.zeros((T + 1, instance.num_constraints))
    adapted = np.zeros(T + 1, dtype=np.int64)
    reward = 0.0

    for t in range(T + 1):
        census_hist[t] = census
        d = policy.decide(census, t)
        c = d.counts
        if check:
            if np.any(c < 0) or not np.array_equal(
                np.bincount(idx.pair, weights=c, minlength=idx.num_pairs).astype(np.int64), census
            ):
                raise WcgError(f"policy {policy.name} broke the census marginals at t={t}")
        lhs = F @ c
        slack[t] = lhs / total
        if check and np.any(lhs > tol):
            bad = int(np.argmax(lhs))
            raise FeasibilityViolation(
                f"policy {policy.name} violates constraint {bad} at t={t}: lhs {lhs[bad] / total:.6g}"
            )
        counts_hist[t] = c
        adapted[t] = d.adapted
        reward += float(c @ r)
        if t == T:
            break
        nxt = np.zeros(idx.num_pairs, dtype=np.int64)
        for j in np.flatnonzero(c):
            sup = tr.support[j]
            if sup.size == 1:
                nxt[sup[0]] += c[j]
            else:
                nxt[sup] += rng.multinomial(c[j], tr.probs[j])
        census = nxt

    if check:
        final = np.bincount(idx.pair_gang, weights=census, minlength=instance.num_gangs)
        if not np.array_equal(final, gang_totals):
            raise WcgError("gang populations changed during the episode")

    res = EpisodeResult(reward / h, counts_hist, census_hist, slack, adapted, h, total)
    if reference is not None:
        res.max_deviation = max_deviation(counts_hist / total, reference)
    if policy.alpha is not None:
        res.balance_deviation = balance_deviation(counts_hist, census_hist, policy.alpha.alpha, instance)
    return res


@dataclass
class SweepRow:
    h: int
    policy: str
    reps: int
    mean_reward: float
    ci: float | None  # 95% half-width; None with fewer than two replications
    subopt: float
    p_hat: float
    median_dev: float
    mean_dev: float = float("nan")
    q90_dev: float = float("nan")
    median_balance: float = float("nan")
    max_adapted: int = 0
    rewards: list = field(default_factory=list, repr=False)
    deviations: list = field(default_factory=list, repr=False)
    balances: list = field(default_factory=list, repr=False)
    episodes: list = field(default_factory=list, repr=False)
    gamma_star: float = float("nan")

    @property
    def subopt_ci(self) -> float | None:
        """CI half-width on the suboptimality scale."""
        return None if self.ci is None else self.ci / abs(self.gamma_star)


def summarize(h, policy_name, rewards, deviations, balances, adapted, gamma_star, epsilon) -> SweepRow:
    rewards = np.asarray(rewards, dtype=float)
    deviations = np.asarray(deviations, dtype=float)
    n = rewards.size
    mean = float(rewards.mean())
    ci = float(Z95 * rewards.std(ddof=1) / math.sqrt(n)) if n >= 2 else None
    subopt = (gamma_star - mean) / gamma_star if gamma_star else float("nan")
    finite = deviations[np.isfinite(deviations)]
    p_hat = float(np.mean(finite > epsilon)) if finite.size else float("nan")
    return SweepRow(
        h=int(h),
        policy=policy_name,
        reps=n,
        mean_reward=mean,
        ci=ci,
        subopt=float(subopt),
        p_hat=p_hat,
        median_dev=float(np.median(finite)) if finite.size else float("nan"),
        mean_dev=float(finite.mean()) if finite.size else float("nan"),
        q90_dev=float(np.quantile(finite, 0.9)) if finite.size else float("nan"),
        median_balance=float(np.nanmedian(balances)) if np.isfinite(balances).any() else float("nan"),
        max_adapted=int(max(adapted, default=0)),
        rewards=rewards.tolist(),
        deviations=deviations.tolist(),
        balances=list(balances),
        gamma_star=float(gamma_star),
    )


def monte_carlo(
    instance,
    h,
    policy: Policy,
    reps,
    master_seed=0,
    epsilon=0.05,
    gamma_star=float("nan"),
    reference=None,
    target_rel_ci=None,
    max_reps=None,
    batch=None,
    keep_episodes=False,
) -> SweepRow:
    """Run replications 0..reps-1 and aggregate.

    With ``target_rel_ci`` set, further replications are added in batches
    until the CI half-width is at most that fraction of |mean| or
    ``max_reps`` is reached.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    rewards, devs, bals, adapted, eps = [], [], [], [], []

    def run(lo, hi):
        for rep in range(lo, hi):
            ep = run_episode(instance, h, policy, child_seed(master_seed, rep), reference)
            rewards.append(ep.total_reward)
            devs.append(ep.max_deviation)
            bals.append(ep.balance_deviation)
            adapted.append(int(ep.adapted.max()))
            if keep_episodes:
                eps.append(ep)

    run(0, reps)
    if target_rel_ci is not None:
        limit = max_reps or 50 * reps
        step = batch or reps
        while len(rewards) < limit and len(rewards) >= 2:
            arr = np.asarray(rewards)
            half = Z95 * arr.std(ddof=1) / math.sqrt(arr.size)
            if half <= target_rel_ci * abs(arr.mean()):
                break
            run(len(rewards), min(limit, len(rewards) + step))
    row = summarize(h, policy.name, rewards, devs, bals, adapted, gamma_star, epsilon)
    row.episodes = eps
    return row


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points: int


def rate_fit(h_values, p_hat) -> RateFit:
    """Least-squares fit of ln p̂ against h over points with 0 < p̂ < 1."""
    h_values = np.asarray(h_values, dtype=float)
    p_hat = np.asarray(p_hat, dtype=float)
    keep = (p_hat > 0) & (p_hat < 1)
    if keep.sum() < 3:
        raise InsufficientData(f"only {int(keep.sum())} grid points with 0 < p_hat < 1 (need 3)")
    x, y = h_values[keep], np.log(p_hat[keep])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 else 1.0 - ss_res / ss_tot
    return RateFit(float(slope), float(intercept), r2, int(keep.sum()))


def trend_violations(h_values, p_hat, reps, alpha=0.05) -> list:
    """Consecutive grid pairs where p̂ rises significantly (one-sided two-proportion z-test).

    Returns (h_prev, h_next, z, p_value) for each significant increase.
    """
    out = []
    reps = np.broadcast_to(np.asarray(reps), np.shape(p_hat))
    for k in range(len(p_hat) - 1):
        p1, p2 = float(p_hat[k]), float(p_hat[k + 1])
        n1, n2 = int(reps[k]), int(reps[k + 1])
        pooled = (p1 * n1 + p2 * n2) / (n1 + n2)
        se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
        if se == 0:
            continue
        z = (p2 - p1) / se
        pv = float(stats.norm.sf(z))
        if pv < alpha:
            out.append((h_values[k], h_values[k + 1], z, pv))
    return out
