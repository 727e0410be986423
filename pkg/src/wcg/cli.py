"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 infeasible instance or failed validation.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from io import StringIO

from . import io as wio
from .core import InstanceError, WcgError, validate_instance
from .experiments import converge, parse_h_list, prepare, sweep
from .lp import action_probabilities, solve_instance
from .oracle import DEFAULT_CAP, OracleCapExceeded, exact_oracle
from .policies import AdaptionExhausted
from .simulator import FeasibilityViolation

POLICIES = ("fab", "lp-approx", "greedy", "priority")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _positive_int(flag):
    def conv(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
        if v < 1:
            raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
        return v

    conv.__name__ = flag
    return conv


def _add_instance(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--instance", metavar="PATH", help="instance JSON (format wcg-v1)")
    g.add_argument("--builtin", choices=sorted(wio.BUILTINS), help="named built-in instance")


def _add_policy(p, multiple=False):
    p.add_argument(
        "--policy",
        default="fab",
        help=("comma list of " if multiple else "one of ") + ", ".join(POLICIES),
    )
    p.add_argument("--anchor", choices=("minimizer", "majority"), default="minimizer",
                   help="action receiving the floor remainder in fab / lp-approx")
    p.add_argument("--greedy-tie", choices=("low", "high"), default="low",
                   help="tie-break among equal greedy scores")
    p.add_argument("--ranking", help="state ranking for the priority policy, e.g. 2,0,1")
    p.add_argument("--budget", type=float, help="activation budget fraction for the priority policy")


def _add_sim(p):
    p.add_argument("--reps", type=_positive_int("--reps"), default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.05)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wcg", description="Weakly coupled gangs: LP relaxation, FAB policy, simulation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check an instance and its cheap-action condition")
    _add_instance(p)

    p = sub.add_parser("solve", help="solve the LP relaxation and export it")
    _add_instance(p)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="json: objective, x and residuals; csv: action probabilities")

    p = sub.add_parser("simulate", help="Monte Carlo at a single h")
    _add_instance(p)
    _add_policy(p)
    p.add_argument("--h", type=_positive_int("--h"), required=True)
    _add_sim(p)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="csv: per-replication trajectories; json: summary")

    p = sub.add_parser("sweep", help="Monte Carlo over a grid of h")
    _add_instance(p)
    _add_policy(p, multiple=True)
    p.add_argument("--h-list", required=True, help="a:b:c (inclusive) or comma list")
    _add_sim(p)
    p.add_argument("--target-ci", type=float, help="add replications until CI half-width <= this fraction of the mean")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("oracle", help="exact optimum of a small instance")
    _add_instance(p)
    p.add_argument("--h", type=_positive_int("--h"), default=1)
    p.add_argument("--cap", type=_positive_int("--cap"), default=DEFAULT_CAP)

    p = sub.add_parser("converge", help="exceedance of the fluid deviation across h")
    _add_instance(p)
    p.add_argument("--h-list", required=True)
    _add_sim(p)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def _load(args):
    if args.builtin:
        return wio.builtin_instance(args.builtin)
    return wio.load_instance(args.instance)


def _emit(text: str, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _policy_options(args) -> dict:
    ranking = None
    if args.ranking is not None:
        try:
            ranking = [int(v) for v in args.ranking.split(",")]
        except ValueError:
            raise UsageError(f"--ranking: cannot parse {args.ranking!r}") from None
    if args.budget is not None and not 0.0 <= args.budget <= 1.0:
        raise UsageError(f"--budget: {args.budget} is outside [0, 1]")
    return {"anchor": args.anchor, "tie": args.greedy_tie, "ranking": ranking, "budget": args.budget}


def _policies(args, multiple) -> list:
    names = [p.strip() for p in args.policy.split(",")] if multiple else [args.policy]
    for n in names:
        if n not in POLICIES:
            raise UsageError(f"--policy: unknown policy {n!r} (choose from {', '.join(POLICIES)})")
    if "priority" in names and (args.ranking is None or args.budget is None):
        raise UsageError("--policy priority requires --ranking and --budget")
    return names


def _validated(instance):
    rep = validate_instance(instance)
    if not rep.ok:
        for line in rep.lines():
            print(line, file=sys.stderr)
        raise InstanceError("instance failed validation")
    return rep


def _prepare(instance):
    sol = solve_instance(instance)
    if sol.status != "optimal":
        raise InstanceError(f"LP relaxation is {sol.status}")
    return prepare(instance, sol)


def cmd_validate(args) -> int:
    rep = validate_instance(_load(args))
    for line in rep.lines():
        print(line)
    return 0 if rep.ok else 2


def cmd_solve(args) -> int:
    instance = _load(args)
    _validated(instance)
    sol = solve_instance(instance)
    if sol.status != "optimal":
        print(f"LP status: {sol.status}", file=sys.stderr)
        if sol.infeasible_rows:
            print(f"infeasible rows: {sol.infeasible_rows[:20]}", file=sys.stderr)
        return 2
    print(f"objective {sol.objective!r}", file=sys.stderr)
    print(f"primal residual {sol.primal_residual:.3e}, dual gap {sol.dual_gap:.3e}", file=sys.stderr)
    if args.format == "json":
        text = json.dumps(wio.solution_to_dict(sol)) + "\n"
    else:
        buf = StringIO()
        wio.write_csv(buf, ["t", "i", "s", "a", "alpha"],
                      wio.alpha_rows(action_probabilities(sol, instance), instance))
        text = buf.getvalue()
    _emit(text, args.out)
    return 0


def cmd_simulate(args) -> int:
    instance = _load(args)
    _validated(instance)
    names = _policies(args, multiple=False)
    opts = _policy_options(args)
    table = sweep(_prepare(instance), [args.h], names, args.reps, args.seed, args.epsilon,
                  policy_options={names[0]: opts}, keep_episodes=args.format == "csv")
    row = table.rows[0]
    if args.format == "csv":
        buf = StringIO()
        wio.write_csv(buf, ["rep", "t", "gsa_flat", "count"], wio.trajectory_rows(row.episodes))
        text = buf.getvalue()
    else:
        text = json.dumps({c: getattr(row, c) for c in wio.SWEEP_COLUMNS}) + "\n"
    print(
        f"h={row.h} policy={row.policy} mean={row.mean_reward:.6g} ci={row.ci} subopt={row.subopt:.4%}",
        file=sys.stderr,
    )
    _emit(text, args.out)
    return 0


def _fit_summary(fits) -> dict:
    out = {}
    for name, fit in fits.items():
        out[name] = fit if isinstance(fit, str) else {
            "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared, "points": fit.points,
        }
    return out


def cmd_sweep(args) -> int:
    instance = _load(args)
    _validated(instance)
    h_list = _h_list(args)
    names = _policies(args, multiple=True)
    opts = _policy_options(args)
    table = sweep(_prepare(instance), h_list, names, args.reps, args.seed, args.epsilon,
                  target_rel_ci=args.target_ci, policy_options={n: opts for n in names})
    if args.format == "csv":
        text = wio.sweep_to_csv(table.rows)
    else:
        text = json.dumps({
            "rows": [{c: getattr(r, c) for c in wio.SWEEP_COLUMNS} for r in table.rows],
            "rate_fit": _fit_summary(table.fits),
        }) + "\n"
    for name, fit in _fit_summary(table.fits).items():
        print(f"rate fit [{name}]: {fit}", file=sys.stderr)
    _emit(text, args.out)
    return 0


def cmd_oracle(args) -> int:
    instance = _load(args)
    _validated(instance)
    try:
        res = exact_oracle(instance, args.h, args.cap)
    except OracleCapExceeded as exc:
        print(str(exc), file=sys.stderr)
        return 2
    sol = solve_instance(instance)
    print(f"joint states {res.joint_states}, state-time pairs {res.state_time_pairs}")
    if not res.feasible:
        print("no policy satisfies the constraints at every step")
        return 2
    print(f"exact optimum per unit h: {res.value!r}")
    if sol.status == "optimal":
        print(f"LP bound: {sol.objective!r}")
    return 0


def cmd_converge(args) -> int:
    instance = _load(args)
    _validated(instance)
    rep = converge(_prepare(instance), _h_list(args), args.reps, args.seed, args.epsilon)
    if args.format == "csv":
        text = wio.sweep_to_csv(rep.table.rows)
    else:
        text = json.dumps({
            "rows": [{c: getattr(r, c) for c in wio.SWEEP_COLUMNS} for r in rep.table.rows],
            "rate_fit": _fit_summary(rep.table.fits)["fab"],
            "trend_violations": [list(v) for v in rep.violations],
        }) + "\n"
    print(f"rate fit: {_fit_summary(rep.table.fits)['fab']}", file=sys.stderr)
    print(f"significant increases of p_hat: {rep.violations or 'none'}", file=sys.stderr)
    _emit(text, args.out)
    return 0


def _h_list(args):
    try:
        return parse_h_list(args.h_list)
    except ValueError as exc:
        raise UsageError(f"--h-list: {exc}") from None


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
    "converge": cmd_converge,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "epsilon", None) is not None and not (args.epsilon > 0 and math.isfinite(args.epsilon)):
        print(f"wcg: error: --epsilon must be positive, got {args.epsilon}", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"wcg: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # bad policy configuration such as a ranking that is not a permutation
        print(f"wcg: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"wcg: error: {exc}", file=sys.stderr)
        return 1 if isinstance(exc, FileNotFoundError) else 2
    except (InstanceError, FeasibilityViolation, AdaptionExhausted) as exc:
        print(f"wcg: {exc}", file=sys.stderr)
        return 2
    except WcgError as exc:
        print(f"wcg: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
