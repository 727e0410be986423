"""h-sweeps and the exceedance study built on the simulator."""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import WcgInstance
from .lp import action_probabilities, deterministic_trajectory, solve_instance
from .policies import make_policy
from .simulator import InsufficientData, monte_carlo, rate_fit, trend_violations


def parse_h_list(text: str) -> list:
    """``a:b:c`` (inclusive start:stop:step) or a comma list of positive integers."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1)
            if len(parts) != 3 or parts[2] <= 0:
                raise ValueError
            values = list(range(parts[0], parts[1] + 1, parts[2]))
        else:
            values = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ValueError(f"cannot parse h list {text!r}") from None
    if not values or min(values) < 1:
        raise ValueError(f"h list {text!r} must contain positive integers")
    return values


@dataclass
class Prepared:
    instance: WcgInstance
    solution: object
    alpha: object
    reference: object

    @property
    def gamma_star(self) -> float:
        return self.solution.objective


def prepare(instance: WcgInstance, solution=None) -> Prepared:
    """Solve the LP once and derive ᾱ and the fluid trajectory."""
    solution = solution or solve_instance(instance)
    if solution.status != "optimal":
        raise ValueError(f"LP is {solution.status}")
    alpha = action_probabilities(solution, instance)
    return Prepared(instance, solution, alpha, deterministic_trajectory(solution, instance))


@dataclass
class SweepTable:
    rows: list
    fits: dict = field(default_factory=dict)  # policy -> RateFit or message


def sweep(
    prep: Prepared,
    h_list,
    policies=("fab",),
    reps=100,
    seed=0,
    epsilon=0.05,
    target_rel_ci=None,
    max_reps=None,
    policy_options=None,
    keep_episodes=False,
) -> SweepTable:
    opts = policy_options or {}
    built = {p: make_policy(p, prep.instance, prep.alpha, **opts.get(p, {})) for p in policies}
    rows = []
    for h in h_list:
        for name, pol in built.items():
            rows.append(
                monte_carlo(
                    prep.instance, h, pol, reps, seed, epsilon, prep.gamma_star, prep.reference,
                    target_rel_ci=target_rel_ci, max_reps=max_reps, keep_episodes=keep_episodes,
                )
            )
    table = SweepTable(rows)
    for name in built:
        mine = [r for r in rows if r.policy == name]
        try:
            table.fits[name] = rate_fit([r.h for r in mine], [r.p_hat for r in mine])
        except InsufficientData as exc:
            table.fits[name] = str(exc)
    return table


@dataclass
class ConvergeReport:
    table: SweepTable
    fit: object
    violations: list

    @property
    def monotone(self) -> bool:
        return not self.violations


def converge(prep: Prepared, h_list, reps=200, seed=0, epsilon=0.05, policy="fab") -> ConvergeReport:
    """Exceedance probability of the max deviation from the fluid trajectory across h."""
    table = sweep(prep, h_list, (policy,), reps, seed, epsilon)
    rows = table.rows
    viol = trend_violations([r.h for r in rows], [r.p_hat for r in rows], [r.reps for r in rows])
    return ConvergeReport(table, table.fits[policy], viol)
