"""Built-in resource-allocation instance: four services and one arrival gang.

Gangs 0..3 are services whose state counts customers in service and whose
action counts newly admitted customers. Gang 4 tracks bulk arrivals as a
pair (arrivals n, slot tau) and has a single action. Constraint 0 limits
admissions to arrivals; constraints 1..5 are capacities of five resource
pools.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from .core import ConstraintTable, GangSpec, WcgInstance

ARRIVAL_RATES = (
    10, 9.6, 9, 5.8, 6.8, 3.2, 6.2, 5.2, 5.5, 8.8, 5, 4.6, 4, 2.8, 1.8, 3.2,
    3.2, 2.2, 2.5, 0, 6, 3.6, 3, 2.8, 3.8, 3.2, 5.2, 5.2, 2.5, 4.4, 0,
)
MAX_ARRIVALS = 30

SERVICE_TRANSITIONS = {
    0: [
        [[1, 0], [0.3, 0.7]],
        [[0, 1], [0.3, 0.7]],
    ],
    1: [
        [[1, 0, 0], [0.3, 0.7, 0], [0.09, 0.42, 0.49]],
        [[0, 1, 0], [0, 0.3, 0.7], [0.09, 0.42, 0.49]],
        [[0, 0, 1], [0, 0.3, 0.7], [0.09, 0.42, 0.49]],
    ],
    3: [
        [[1, 0, 0, 0], [0.2, 0.8, 0, 0], [0.04, 0.32, 0.64, 0], [0.008, 0.096, 0.384, 0.512]],
        [[0, 1, 0, 0], [0, 0.2, 0.8, 0], [0, 0.04, 0.32, 0.64], [0.008, 0.096, 0.384, 0.512]],
        [[0, 0, 1, 0], [0, 0, 0.2, 0.8], [0, 0.04, 0.32, 0.64], [0.008, 0.096, 0.384, 0.512]],
        [[0, 0, 0, 1], [0, 0, 0.2, 0.8], [0, 0.04, 0.32, 0.64], [0.008, 0.096, 0.384, 0.512]],
    ],
}
SERVICE_TRANSITIONS[2] = SERVICE_TRANSITIONS[1]


@dataclass(frozen=True)
class AppendixGConfig:
    horizon: int = 30
    departure: tuple = (0.3, 0.3, 0.3, 0.2)
    # resource units per customer: rows are services, columns are pools
    usage: tuple = (
        (0, 3, 0, 1, 0),
        (1, 0, 0, 0, 3),
        (3, 0, 1, 0, 0),
        (0, 0, 3, 1, 0),
    )
    capacity: tuple = (8, 5, 9, 7, 8)
    revenue: tuple = (110.3085, 122.0775, 120.3569, 100.182)
    unit_cost: tuple = (1.3687, 1.0789, 0.6667, 0.1523, 1.9761)
    arrival_rates: tuple = ARRIVAL_RATES
    base_pops: tuple = (1, 1, 1, 1, 1)
    # charge resource cost per unit actually held instead of a flat per-service charge
    usage_scaled_cost: bool = False

    def __post_init__(self):
        if not 0 <= self.horizon < len(self.arrival_rates):
            raise ValueError(f"horizon must lie in [0, {len(self.arrival_rates) - 1}]")


def arrival_state(n: int, tau: int, horizon: int) -> int:
    """Flat state index of arrival-gang state (n, tau)."""
    return n * (horizon + 1) + tau


def poisson_truncated(lam: float, top: int = MAX_ARRIVALS) -> np.ndarray:
    """Poisson(lam) pmf on 0..top with the upper tail folded onto ``top``.

    The folded entry is one minus the correctly rounded head sum, so the row
    sums to exactly one under math.fsum.
    """
    pmf = poisson.pmf(np.arange(top), lam)
    tail = 1.0 - math.fsum(pmf)
    if tail < 0:
        # rounding pushed the head above one; take the excess off the mode
        pmf[np.argmax(pmf)] += tail
        tail = 0.0
    return np.append(pmf, tail)


def _arrival_gang(cfg: AppendixGConfig) -> GangSpec:
    T = cfg.horizon
    S = (MAX_ARRIVALS + 1) * (T + 1)
    P = np.zeros((1, S, S))
    for tau in range(T + 1):
        pmf = poisson_truncated(cfg.arrival_rates[tau])
        nxt = min(tau + 1, T)
        cols = [arrival_state(k, nxt, T) for k in range(MAX_ARRIVALS + 1)]
        for n in range(MAX_ARRIVALS + 1):
            P[0, arrival_state(n, tau, T), cols] = pmf
    return GangSpec(P, np.zeros((S, 1)))


def generate_appendix_g(cfg: AppendixGConfig | None = None) -> WcgInstance:
    cfg = cfg or AppendixGConfig()
    w = np.array(cfg.usage, dtype=float)
    pools = w.shape[1]
    n_services = len(SERVICE_TRANSITIONS)
    I = n_services + 1
    L = pools + 1
    T = cfg.horizon

    gangs, fvals = [], []
    for i in range(n_services):
        P = np.array(SERVICE_TRANSITIONS[i], dtype=float)
        S = A = P.shape[1]
        s = np.arange(S)[:, None]
        a = np.arange(A)[None, :]
        held = np.minimum(S - 1, s + a)
        if cfg.usage_scaled_cost:
            cost = held * float(np.dot(cfg.unit_cost, w[i]))
        else:
            cost = float(np.dot(cfg.unit_cost, w[i])) * np.ones((S, A))
        rewards = cfg.revenue[i] * cfg.departure[i] * s * np.ones((1, A)) - cost
        gangs.append(GangSpec(P, rewards))
        f = np.empty((L, S, A))
        f[0] = np.minimum(S - 1 - s, a)
        for k in range(pools):
            f[k + 1] = w[i, k] * held - cfg.capacity[k] / ((I - 1) * cfg.base_pops[i])
        fvals.append(f)

    arrivals = _arrival_gang(cfg)
    gangs.append(arrivals)
    f5 = np.zeros((L, arrivals.num_states, 1))
    for n in range(MAX_ARRIVALS + 1):
        for tau in range(T + 1):
            f5[0, arrival_state(n, tau, T), 0] = -n
    fvals.append(f5)

    init = [np.eye(g.num_states)[0] for g in gangs]
    return WcgInstance(
        tuple(gangs),
        ConstraintTable(tuple(fvals), L),
        T,
        np.array(cfg.base_pops),
        tuple(init),
        name="appendix-g",
    )
