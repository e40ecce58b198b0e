"""Acceptance criteria, one test each. Every test appends a PASS/FAIL line to
RESULTS (printed in the terminal summary) before asserting."""

import time
from collections import Counter

import numpy as np
import pytest

from sgsp.baselines import nashq_run
from sgsp.config import SgspConfig
from sgsp.environments import DeltaEnv, GameEnv, StgEnv, build_stg
from sgsp.equilibrium import descent_directions, grad_f_all, objective_f, project_rows, sgsp_check
from sgsp.game import exact_value, make_rng, random_game, random_policy
from sgsp.harness import NON_NASH, ExperimentConfig, run_cell
from sgsp.off_sgsp import run_off_sgsp
from sgsp.on_sgsp import SelfPlayDriver
from sgsp.oracle import finite_diff_grad, is_nash, value_iteration_fixed_policy

pytestmark = pytest.mark.slow

RESULTS = []


def report(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def hart_cells(algorithm, n_runs=100, steps=10_000):
    cfg = ExperimentConfig.from_dict({
        "experiment": "hart", "algorithm": algorithm, "seeds": list(range(n_runs)), "steps": steps,
        "sgsp": {"snapshot_every": 100},
    })
    return [run_cell(cfg, algorithm, seed) for seed in cfg.seeds]


def test_1_hart_on_sgsp():
    start = time.perf_counter()
    traces = hart_cells("on-sgsp")
    elapsed = time.perf_counter() - start
    labels = Counter(t.final["outcome"] for t in traces)
    converged = [t for t in traces if t.final["outcome"] != NON_NASH]
    certified_non_nash = sum(1 for t in converged if t.final["nash_gain"] > 0.1)
    modal = labels.most_common(1)[0][0]
    ok = len(converged) >= 90 and modal == "mixed-NE" and certified_non_nash == 0 and elapsed < 120
    detail = f"outcomes {dict(labels)}, NE runs {len(converged)}/100 (need >= 90, mixed modal), " \
             f"non-Nash among NE-labelled {certified_non_nash}, {elapsed:.0f}s"
    assert report(1, ok, detail), detail


def test_2_hart_baselines():
    start = time.perf_counter()
    nashq = Counter(t.final["outcome"] for t in hart_cells("nashq"))
    friendq = Counter(t.final["outcome"] for t in hart_cells("friendq"))
    elapsed = time.perf_counter() - start
    ok = nashq[NON_NASH] >= 50 and friendq["pure-NE"] >= 30 and friendq[NON_NASH] >= 20 and elapsed < 600
    detail = f"NashQ {dict(nashq)} (need >= 50 non-Nash/oscillating); Friend-Q {dict(friendq)} " \
             f"(need >= 30 pure-NE and >= 20 non-Nash/oscillating); {elapsed:.0f}s"
    assert report(2, ok, detail), detail


def test_3_off_sgsp_stg3():
    game = build_stg(3, 0.8)
    cfg = SgspConfig(max_iters=1_000_000)
    start = time.perf_counter()
    v, pi, trace = run_off_sgsp(game, np.zeros((2, game.n_states)), game.uniform_policy(), cfg)
    elapsed = time.perf_counter() - start
    f = objective_f(game, v, pi)
    certified = sgsp_check(game, v, pi, 0.05).certified
    nash, gain = is_nash(game, pi, 0.05)
    ok = abs(f) < 0.05 and certified and nash and trace.final["iterations"] <= 1_000_000 and elapsed < 900
    detail = f"f={f:.3g} after {trace.final['iterations']} iterations, sgsp_check={certified}, " \
             f"is_nash={nash} (gain {gain:.2g}), {elapsed:.1f}s"
    assert report(3, ok, detail), detail


def test_4_stg_delta_m30():
    steps = 300_000
    cfg = SgspConfig(snapshot_every=1000)
    start = time.perf_counter()
    _, _, trace = SelfPlayDriver(DeltaEnv(StgEnv(30, 0.8)), cfg, make_rng(0)).run(steps)
    elapsed = time.perf_counter() - start
    s, change = trace.series("policy_change")
    late_change = float(change[s > 0.9 * steps].max())
    s, dist = trace.series("distance")
    prev = dist[(s > 200_000) & (s <= 250_000)].mean()
    last = dist[s > 250_000].mean()
    plateau = abs(last - prev) <= 0.1 * prev
    stationary = late_change <= 0.05
    ok = stationary and plateau and elapsed < 120
    detail = f"max policy change per 1000 steps over the last 10% = {late_change:.3g} (need <= 0.05); " \
             f"distance {prev:.2f} -> {last:.2f} (plateau within 10%: {plateau}); {elapsed:.0f}s"
    assert report(4, ok, detail), detail


def first_last(trace):
    s, d = trace.series("distance")
    d = d[s > 0]
    k = max(1, len(d) // 10)
    return float(d[:k].mean()), float(d[-k:].mean())


def test_5_stg_m4_on_sgsp_vs_nashq():
    steps = 1_000_000
    cfg = SgspConfig(snapshot_every=10_000)
    _, _, on = SelfPlayDriver(StgEnv(4, 0.8), cfg, make_rng(0)).run(steps)
    _, nq = nashq_run(StgEnv(4, 0.8), cfg, make_rng(0), steps)
    on_first, on_last = first_last(on)
    _, nq_last = first_last(nq)
    ok = on_last <= 0.5 * on_first and on_last < nq_last
    detail = f"ON-SGSP distance first 10% {on_first:.3f} -> final 10% {on_last:.3f} " \
             f"(ratio {on_last / on_first:.2f}, need <= 0.5); NashQ final {nq_last:.3f} (need ON-SGSP lower)"
    assert report(5, ok, detail), detail


def test_6_oracle_equivalences():
    start = time.perf_counter()
    gen = make_rng(606)
    worst_value = 0.0
    for _ in range(50):
        game = random_game(gen, n_states=int(gen.integers(1, 5)), n_actions=int(gen.integers(1, 4)))
        pi = random_policy(game, gen)
        worst_value = max(worst_value, float(np.abs(exact_value(game, pi) - value_iteration_fixed_policy(game, pi, tol=1e-10)).max()))
    worst_grad = 0.0
    for _ in range(100):
        game = random_game(gen, n_states=2, n_actions=int(gen.integers(2, 4)))
        pi = random_policy(game, gen)
        v = gen.normal(size=(2, 2))
        i, x = int(gen.integers(2)), int(gen.integers(2))
        a = int(gen.integers(game.action_counts[x, i]))
        exact = grad_f_all(game, v, pi)[i][x, a]
        fd = finite_diff_grad(game, v, pi, i, x, a)
        worst_grad = max(worst_grad, abs(exact - fd) / max(abs(fd), 1e-8))
    disagreements = 0
    candidates = 0
    for _ in range(20):
        game = random_game(gen, n_states=2, n_actions=2)
        # all deterministic profiles plus the points where one agent mixes evenly
        grids = [[0.0, 1.0, 0.5]] * 4
        for probs in np.array(np.meshgrid(*grids)).reshape(4, -1).T:
            pi = [np.array([[probs[0], 1 - probs[0]], [probs[1], 1 - probs[1]]]),
                  np.array([[probs[2], 1 - probs[2]], [probs[3], 1 - probs[3]]])]
            v = exact_value(game, pi)
            candidates += 1
            if sgsp_check(game, v, pi, 1e-6).certified != is_nash(game, pi, 1e-6)[0]:
                disagreements += 1
    worst_f = 0.0
    for _ in range(100):
        game = random_game(gen, n_agents=int(gen.integers(1, 4)), n_states=int(gen.integers(1, 4)), n_actions=2)
        pi = random_policy(game, gen)
        worst_f = max(worst_f, abs(objective_f(game, exact_value(game, pi), pi)))
    elapsed = time.perf_counter() - start
    ok = worst_value <= 1e-8 and worst_grad <= 1e-4 and disagreements == 0 and worst_f <= 1e-9 and elapsed < 60
    detail = f"value gap {worst_value:.2g}, grad rel err {worst_grad:.2g}, sgsp/is_nash disagreements " \
             f"{disagreements}/{candidates}, |f(v_pi, pi)| {worst_f:.2g}, {elapsed:.1f}s"
    assert report(6, ok, detail), detail


def test_7_descent_property():
    gen = make_rng(707)
    worst_raw = worst_projected = -np.inf
    for _ in range(100):
        game = random_game(gen, n_agents=int(gen.integers(1, 4)), n_states=int(gen.integers(1, 4)), n_actions=int(gen.integers(2, 4)))
        pi = random_policy(game, gen)
        v = exact_value(game, pi)
        base = objective_f(game, v, pi)
        dirs = descent_directions(game, v, pi)
        raw = [p + 1e-4 * d for p, d in zip(pi, dirs)]
        projected = [project_rows(p, m) for p, m in zip(raw, game.action_masks)]
        worst_raw = max(worst_raw, objective_f(game, v, raw) - base)
        worst_projected = max(worst_projected, objective_f(game, v, projected) - base)
    ok = worst_raw <= 1e-8 and worst_projected <= 1e-8
    detail = f"largest increase of f: raw move {worst_raw:.3g}, projected move {worst_projected:.3g} (need <= 1e-8)"
    assert report(7, ok, detail), detail


def test_8_xi_tracking():
    gen = make_rng(808)
    game = random_game(gen, n_states=2, n_actions=2)
    pi = game.uniform_policy()
    driver = SelfPlayDriver(GameEnv(game), SgspConfig(perturb_delta=0.0), make_rng(809), freeze_policies=True)
    driver.run(100_000)
    v_pi = exact_value(game, pi)
    grads = grad_f_all(game, v_pi, pi)
    xi_err = max(float(np.abs(a.xi_array() + grads[a.agent_id]).max()) for a in driver.agents)
    v_err = max(float(np.abs(np.array(a.values) - v_pi).max()) for a in driver.agents)
    ok = xi_err <= 0.05 and v_err <= 0.05
    detail = f"max |xi + grad_f| = {xi_err:.3g}, max |v - v_pi| = {v_err:.3g} (need <= 0.05 each)"
    assert report(8, ok, detail), detail


def test_9_determinism(tmp_path):
    cells = [
        ({"experiment": "hart", "steps": 3000, "sgsp": {"snapshot_every": 100}}, "on-sgsp"),
        ({"experiment": "hart", "steps": 3000, "sgsp": {"snapshot_every": 100}}, "nashq"),
        ({"experiment": "hart", "steps": 3000, "sgsp": {"snapshot_every": 100}}, "friendq"),
        ({"experiment": "stg", "size": 3, "steps": 2000}, "off-sgsp"),
        ({"experiment": "stg-delta", "size": 6, "steps": 5000, "sgsp": {"snapshot_every": 500}}, "on-sgsp"),
    ]
    mismatched = []
    for doc, alg in cells:
        cfg = ExperimentConfig.from_dict({**doc, "algorithm": alg, "seeds": [17]})
        texts = []
        for rep in range(2):
            trace = run_cell(cfg, alg, 17)
            csv_path, _ = trace.write(tmp_path / f"rep{rep}", f"{doc['experiment']}-{alg}")
            texts.append([ln for ln in csv_path.read_text().splitlines() if ",wall_clock_ms," not in ln])
        if texts[0] != texts[1]:
            mismatched.append(f"{doc['experiment']}/{alg}")
    ok = not mismatched
    detail = f"{len(cells)} cells rerun with identical seed/config, byte-identical rows: {ok}" + (f" (differs: {mismatched})" if mismatched else "")
    assert report(9, ok, detail), detail
