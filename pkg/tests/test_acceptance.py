"""Acceptance criteria, one test each; every test records a PASS/FAIL summary line."""

import subprocess
import sys

import numpy as np
import pytest

from conftest import record
from oracles import hand_lp_by_hand, vertex_enumeration
from wcg.appendix_g import AppendixGConfig, generate_appendix_g
from wcg.core import WcgError
from wcg.experiments import converge, prepare, sweep
from wcg.generators import hand_lp_instance, random_instance
from wcg.lp import solve_instance
from wcg.oracle import exact_oracle
from wcg.policies import FabPolicy
from wcg.simulator import child_seed, monte_carlo, run_episode


def test_c1_suboptimality_at_h23(appendix_g_prepared):
    p = appendix_g_prepared
    row = monte_carlo(
        p.instance, 23, FabPolicy(p.instance, p.alpha), 200, master_seed=23,
        gamma_star=p.gamma_star, reference=p.reference, target_rel_ci=0.02,
    )
    half = row.subopt_ci
    rel_ci = row.ci / abs(row.mean_reward)
    passed = rel_ci <= 0.02 and (row.subopt < 0.01 or row.subopt - half <= 0.01 <= row.subopt + half)
    alt = monte_carlo(
        p.instance, 23, FabPolicy(p.instance, p.alpha, anchor="majority"), 200, master_seed=23,
        gamma_star=p.gamma_star,
    )
    record(
        "C1 FAB suboptimality < 1% at h=23",
        passed,
        f"subopt {row.subopt:.4%} +/- {half:.4%} over {row.reps} reps (CI {rel_ci:.3%} of mean); "
        f"majority-anchor variant {alt.subopt:.4%} +/- {alt.subopt_ci:.4%}",
    )
    assert rel_ci <= 0.02
    assert passed, f"FAB suboptimality at h=23 is {row.subopt:.4%} +/- {half:.4%}"


def test_c2_fab_beats_greedy(appendix_g_prepared):
    # rewards on the built-in instance do not depend on the action, so the stated
    # tie rule (lowest action) never admits; the admitting tie rule is checked as well
    grid = [5, 10, 15, 20, 25, 30]
    fab = sweep(appendix_g_prepared, grid, ("fab",), reps=100, seed=2).rows
    failures, parts = [], []
    for tie in ("low", "high"):
        greedy = sweep(appendix_g_prepared, grid, ("greedy",), reps=100, seed=2,
                       policy_options={"greedy": {"tie": tie}}).rows
        for f, g in zip(fab, greedy):
            parts.append(f"{tie} h={f.h}: {f.subopt:.3%} vs {g.subopt:.3%}")
            if not f.subopt < g.subopt:
                failures.append(f"tie={tie} h={f.h} not strictly below")
            # suboptimality CIs: the FAB upper end must stay below the greedy lower end
            if f.h >= 15 and not f.subopt + f.subopt_ci < g.subopt - g.subopt_ci:
                failures.append(f"tie={tie} h={f.h} CIs overlap")
    record("C2 FAB below Greedy on h=5..30", not failures, "; ".join(parts))
    assert not failures, failures


def test_c3_feasibility_suite():
    rng = np.random.default_rng(2024)
    violations, episodes = 0, 0
    for k in range(1000):
        inst = random_instance(rng, num_constraints=int(rng.integers(1, 3)))
        prep = prepare(inst)
        pol = FabPolicy(inst, prep.alpha)
        h = int(rng.integers(1, 12))
        try:
            # run_episode checks exact marginals and every constraint at every step
            run_episode(inst, h, pol, child_seed(k, 0))
        except WcgError:
            violations += 1
        episodes += 1
    record("C3 FAB feasibility on 1000 random instances", violations == 0,
           f"{violations} violating episodes out of {episodes}")
    assert violations == 0


def test_c4_relaxation_sandwich():
    rng = np.random.default_rng(99)
    checked, problems = 0, []
    while checked < 24:
        inst = random_instance(rng, num_gangs=int(rng.integers(1, 3)), max_states=2, max_actions=3,
                               num_constraints=1, horizon=int(rng.integers(1, 3)), init_scale=1)
        h = int(rng.integers(1, 3))
        try:
            oracle = exact_oracle(inst, h, cap=20_000)
        except WcgError:
            continue
        prep = prepare(inst)
        gamma = prep.gamma_star
        row = monte_carlo(inst, h, FabPolicy(inst, prep.alpha), 300, master_seed=checked)
        ci = row.ci or 0.0
        if not oracle.value <= gamma + 1e-6 * max(1.0, abs(gamma)):
            problems.append(f"#{checked}: oracle {oracle.value} > LP {gamma}")
        if not row.mean_reward <= oracle.value + 3 * ci + 1e-9:
            problems.append(f"#{checked}: FAB {row.mean_reward} > oracle {oracle.value} + 3*{ci}")
        checked += 1
    record("C4 relaxation sandwich FAB <= oracle <= LP", not problems,
           f"{checked} instances, {len(problems)} problems")
    assert not problems, problems


def test_c5_exceedance_decay(appendix_g_prepared):
    rep = converge(appendix_g_prepared, [15, 20, 25, 30, 35, 40, 45, 50], reps=200, seed=11, epsilon=0.05)
    fit = rep.fit
    p_hat = [r.p_hat for r in rep.table.rows]
    ok = not isinstance(fit, str) and fit.slope < 0 and fit.r_squared >= 0.8 and rep.monotone
    detail = (f"p_hat {[round(v, 3) for v in p_hat]}; "
              + (fit if isinstance(fit, str) else f"slope {fit.slope:.4f}, r2 {fit.r_squared:.3f}")
              + f"; significant increases {rep.violations or 'none'}")
    record("C5 exceedance decays in h", ok, detail)
    assert ok, detail


def test_c6_balance_diagnostic(appendix_g_prepared):
    p = appendix_g_prepared
    inst = p.instance
    J = inst.index.size
    pol = FabPolicy(inst, p.alpha)
    medians, breaches = {}, 0
    for h in (3, 30):
        row = monte_carlo(inst, h, pol, 60, master_seed=h, keep_episodes=True)
        for ep in row.episodes:
            bound = (J + int(ep.adapted.max()) + 1) / ep.total
            breaches += ep.balance_deviation > bound
        medians[h] = row.median_balance
    ok = breaches == 0 and medians[30] <= medians[3]
    record("C6 balance deviation bound and decrease", ok,
           f"{breaches} bound breaches; median D(3) {medians[3]:.5f}, D(30) {medians[30]:.5f}")
    assert ok


def test_c7_lp_certification(appendix_g_prepared):
    problems = []
    bundled = {
        "appendix-g": appendix_g_prepared.solution,
        "appendix-g usage-scaled": solve_instance(generate_appendix_g(AppendixGConfig(usage_scaled_cost=True))),
        "hand": solve_instance(hand_lp_instance()),
    }
    for name, sol in bundled.items():
        if sol.status != "optimal" or sol.primal_residual > 1e-8 or sol.residuals["normalization"] > 1e-8:
            problems.append(f"{name}: {sol.status}, residuals {sol.residuals}")
    oracle = vertex_enumeration(*hand_lp_by_hand())
    gap = abs(bundled["hand"].objective - oracle)
    if gap > 1e-9:
        problems.append(f"hand instance off the vertex oracle by {gap}")
    worst = max(s.primal_residual for s in bundled.values())
    record("C7 LP certification", not problems,
           f"worst primal residual {worst:.2e}; hand instance gap {gap:.1e}")
    assert not problems, problems


@pytest.mark.parametrize("command", [
    ["sweep", "--builtin", "appendix-g", "--policy", "fab,greedy", "--h-list", "1:5:2", "--reps", "10"],
    ["simulate", "--builtin", "appendix-g", "--h", "2", "--reps", "3"],
])
def test_c8_cli_determinism(command, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "wcg.cli", *command, "--seed", "7", "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append(out.read_bytes())
    same = outs[0] == outs[1] and len(outs[0]) > 0
    record(f"C8 CLI determinism ({command[0]})", same, f"{len(outs[0])} bytes, identical={same}")
    assert same
