"""One test per acceptance criterion, at the stated tolerances.

A pass/fail line per criterion is printed in the terminal summary.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from oracles import (
    brute_do_expectation,
    brute_evidence,
    brute_posterior,
    hand_g_square,
    random_net,
    semi_implicit_position,
)
from scenegen import cli
from scenegen.accident_data import Dataset
from scenegen.bayesnet import evidence_probability, fit_parameters, infer_posterior
from scenegen.campaign import execute_many, risk_yield, round_robin
from scenegen.causal_discovery import KnowledgeConstraints, ci_test, greedy_search, shd, to_cpdag
from scenegen.causal_validation import (
    default_value_map,
    estimate_effect,
    intervene,
    refute_data_subset,
    refute_placebo_treatment,
    refute_random_common_cause,
)
from scenegen.driving_sim import SimConfig, build_world, run, simulate
from scenegen.fixtures import BENCHMARK_TIERS, benchmark_net, confounder_net, default_fixture_net
from scenegen.misbehavior import compute_metrics
from scenegen.risk_generator import generate, random_baseline_generate
from scenegen.scenario import DEFAULT_ACTIONS, DEFAULT_PATTERNS, concretize, default_seeds, to_logical

from helpers import constant_speed_log, counts_dataset, lone_ego_scenario, steering_square_wave_log, ttc_pair

JOBS = min(8, os.cpu_count() or 1)


@pytest.fixture(scope="module")
def benchmark_samples():
    net = benchmark_net()
    return net, {seed: net.sample(50_000, seed=seed) for seed in range(10)}


@pytest.mark.criterion(1, "variable elimination equals full-joint enumeration on 200 random nets")
def test_criterion_01_inference_oracle():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 13))
        net = random_net(rng, n, max_parents=3)
        names = net.schema.names
        query = names[int(rng.integers(n))]
        others = [v for v in names if v != query]
        k = int(rng.integers(0, len(others) + 1))
        chosen = rng.choice(len(others), size=k, replace=False)
        evidence = {others[int(i)]: str(int(rng.integers(2))) for i in chosen}
        got = infer_posterior(net, query, evidence)
        want = brute_posterior(net, query, evidence)
        worst = max(worst, float(np.abs(got - want).max()))
        worst = max(worst, abs(evidence_probability(net, evidence) - brute_evidence(net, evidence)))
    elapsed = time.perf_counter() - start
    print(f"criterion 1: max abs error {worst:.2e}, {elapsed:.1f} s")
    assert worst <= 1e-9
    assert elapsed < 30.0


@pytest.mark.criterion(2, "greedy search recovers the 8-node CPDAG (SHD <= 2 in >= 9 of 10 seeds)")
def test_criterion_02_structure_recovery(benchmark_samples):
    net, samples = benchmark_samples
    truth = to_cpdag(net.dag)
    constraints = KnowledgeConstraints(tiers=BENCHMARK_TIERS)
    good = 0
    for seed, data in samples.items():
        start = time.perf_counter()
        learned = greedy_search(data, constraints, seed=seed)
        elapsed = time.perf_counter() - start
        distance = shd(to_cpdag(learned), truth)
        print(f"criterion 2: seed {seed} SHD {distance} in {elapsed:.2f} s")
        assert elapsed < 60.0
        good += distance <= 2
    assert good >= 9


@pytest.mark.criterion(3, "fitted CPTs within L-infinity 0.02 of truth at n=50,000")
def test_criterion_03_parameter_recovery(benchmark_samples):
    net, samples = benchmark_samples
    fitted = fit_parameters(net.dag, samples[0])
    worst = max(float(np.abs(fitted.cpts[v].table - net.cpts[v].table).max()) for v in net.schema.names)
    print(f"criterion 3: L-inf {worst:.4f}")
    assert worst <= 0.02


@pytest.mark.criterion(4, "CI-test fixtures: chi-square 18.0, G-square hand value, null table gives 0 and p=1")
def test_criterion_04_ci_fixtures():
    dependent = counts_dataset([[20, 5], [5, 20]])
    chi = ci_test(dependent, "X", "Y", method="chi_square")
    assert chi.statistic == 18.0
    g = ci_test(dependent, "X", "Y", method="g_square")
    assert abs(g.statistic - hand_g_square([[20, 5], [5, 20]])) <= 1e-3
    assert abs(g.statistic - 19.2745) <= 1e-3
    null = counts_dataset([[10, 10], [10, 10]])
    for method in ("g_square", "chi_square"):
        res = ci_test(null, "X", "Y", method=method)
        assert res.statistic == 0.0
        assert res.p_value == 1.0


@pytest.mark.criterion(5, "confounder ATE 0.4 +- 1e-9 and mutilated-network oracle on 50 random nets")
def test_criterion_05_effect_estimation():
    estimate = estimate_effect(confounder_net(), "X", "Y")
    assert abs(estimate.value - 0.4) <= 1e-9
    rng = np.random.default_rng(55)
    for _ in range(50):
        n = int(rng.integers(2, 7))
        net = random_net(rng, n, arity=int(rng.integers(2, 4)), max_parents=2)
        t, y = [net.schema.names[int(i)] for i in rng.choice(n, size=2, replace=False)]
        states = net.schema.states(t)
        values = default_value_map(net.schema, y)
        got = estimate_effect(net, (t, states[1], states[0]), y).value
        want = (brute_do_expectation(net, t, states[1], y, values)
                - brute_do_expectation(net, t, states[0], y, values))
        assert abs(got - want) <= 1e-9
        mutilated = intervene(net, t, states[1])
        direct = infer_posterior(mutilated, y) @ np.array([values[s] for s in net.schema.states(y)])
        assert abs(direct - brute_do_expectation(net, t, states[1], y, values)) <= 1e-9


@pytest.mark.criterion(6, "RCC, PTR and DSR refuters behave as documented on a known-effect fixture")
def test_criterion_06_refuters():
    net = confounder_net()
    start = time.perf_counter()
    for seed in range(50):
        data = net.sample(50_000, seed=seed)
        rcc = refute_random_common_cause(net, data, "X", "Y", seed=seed)
        assert abs(rcc.new_effect - rcc.estimated_effect) <= 0.1 * abs(rcc.estimated_effect)
        assert rcc.confidence == "High"
        if seed < 10:
            ptr = refute_placebo_treatment(net, data, "X", "Y", seed=seed)
            assert abs(ptr.new_effect) <= 0.1 * abs(ptr.estimated_effect)
            dsr = refute_data_subset(net, data, "X", "Y", seed=seed)
            assert abs(dsr.new_effect - dsr.estimated_effect) <= 0.1 * abs(dsr.estimated_effect)
            for report in (rcc, ptr, dsr):
                payload = report.to_json()
                assert {"estimated_effect", "new_effect", "p_value"} <= set(payload)
                assert math.isfinite(payload["estimated_effect"]) and math.isfinite(payload["new_effect"])
            assert 0.0 <= ptr.p_value <= 1.0 and 0.0 <= dsr.p_value <= 1.0
    elapsed = time.perf_counter() - start
    print(f"criterion 6: {elapsed:.1f} s")
    assert elapsed < 120.0


def _expected_generation_triples(net, threshold):
    """Hand-written contract table applied to the default seeds, with brute-force risks."""
    roles = {
        "lane_keeping": {"ego", "pedestrian", "obstacle"},
        "pedestrian_crossing": {"ego", "pedestrian"},
        "following": {"ego", "lead_vehicle", "obstacle"},
        "overtaking": {"ego", "lead_vehicle", "oncoming_vehicle"},
        "left_turn": {"ego", "oncoming_vehicle", "pedestrian"},
    }
    road = {k: "straight_two_lane" for k in roles}
    road["left_turn"] = "intersection"
    needs = {
        "sudden_brake": ({"lead_vehicle"}, None),
        "lane_change": ({"lead_vehicle", "obstacle"}, "straight_two_lane"),
        "pedestrian_dart": ({"pedestrian"}, None),
        "run_red_light": ({"oncoming_vehicle"}, "intersection"),
        "none": (set(), None),
    }
    passing, triples = 0, set()
    for seed in roles:
        for pattern in DEFAULT_PATTERNS:
            env = pattern.as_dict()
            if env.get("obstacle", "none") != "none" and ("obstacle" not in roles[seed]
                                                          or road[seed] != "straight_two_lane"):
                continue
            passing += 1
            for action, (need, need_road) in needs.items():
                post = brute_posterior(net, "severity", {**env, "actor_action": action})
                risk = post[1] + post[2]
                if risk >= threshold and need <= roles[seed] and need_road in (None, road[seed]):
                    triples.add((seed, pattern.label, action))
    return passing * len(needs), triples


@pytest.mark.criterion(7, "generate() emits exactly the hand-enumerated set, RP-sorted and deterministic")
def test_criterion_07_generation_fidelity():
    net = default_fixture_net()
    seeds = default_seeds()
    out, report = generate(seeds, DEFAULT_PATTERNS, DEFAULT_ACTIONS, net)
    iterations, expected = _expected_generation_triples(net, 0.35)
    assert {s.provenance for s in out} == expected
    assert len(out) == len(expected) == 38
    assert report.iterations == iterations == 135
    rps = [s.risk_priority for s in out]
    assert rps == sorted(rps, reverse=True)
    again, _ = generate(seeds, DEFAULT_PATTERNS, DEFAULT_ACTIONS, net)
    assert [s.to_json() for s in again] == [s.to_json() for s in out]


def _risky(outcome) -> bool:
    return bool({"crash", "ttc"} & set(outcome.verdict.reasons))


@pytest.mark.criterion(8, "top-10 RP scenarios reach >= 3x the crash-or-TTC rate of the seeds")
def test_criterion_08_risk_amplification():
    net = default_fixture_net()
    seeds = default_seeds()
    ranked, _ = generate(seeds, DEFAULT_PATTERNS, DEFAULT_ACTIONS, net)
    top = [concretize(s.scenario, 1, seed=k)[0] for s in ranked[:10] for k in range(5)]
    base = [concretize(to_logical(f), 1, seed=k)[0] for f in seeds for k in range(5)]
    top_rate = float(np.mean([_risky(o) for o in execute_many(top, jobs=JOBS)]))
    base_rate = float(np.mean([_risky(o) for o in execute_many(base, jobs=JOBS)]))
    print(f"criterion 8: top-10 rate {top_rate:.2f}, seed rate {base_rate:.2f}")
    assert top_rate > 0
    assert top_rate >= 3 * base_rate


@pytest.mark.criterion(9, "CBN-guided yield beats the random baseline in >= 9 of 10 paired trials")
def test_criterion_09_efficiency():
    net = default_fixture_net()
    seeds = default_seeds()
    ranked, _ = generate(seeds, DEFAULT_PATTERNS, DEFAULT_ACTIONS, net)
    logicals = [s.scenario for s in ranked]
    wins = 0
    for trial in range(10):
        cbn = risk_yield(execute_many(round_robin(logicals, 100, seed=trial), jobs=JOBS))
        baseline, _ = random_baseline_generate(seeds, trial, 100, net)
        rnd = risk_yield(execute_many(round_robin([s.scenario for s in baseline], 100, seed=trial), jobs=JOBS))
        print(f"criterion 9: trial {trial} cbn {cbn:.2f} random {rnd:.2f}")
        wins += cbn > rnd
    assert wins >= 9


@pytest.mark.criterion(10, "simulator determinism, constant-acceleration fixture, stopping distance monotone in friction")
def test_criterion_10_simulator_fixtures():
    seed = concretize(to_logical(default_seeds()[2]), 1, seed=3)[0]
    a, b = simulate(seed), simulate(seed)
    assert a.states == b.states and a.events == b.events and a.controls == b.controls

    config = SimConfig(dt=0.1, a_max=2.0, friction={"dry": 1.0, "wet": 0.6, "flooded": 0.4, "icy": 0.2,
                                                     "debris": 0.7})
    log = run(build_world(lone_ego_scenario(speed=0.0, set_speed=100.0), config), duration=1.0)
    final = log.states["ego"][-1]
    v_ref, x_ref = semi_implicit_position(2.0, 0.1, 10)
    assert len(log) == 11
    assert final.speed == pytest.approx(2.0, abs=1e-12) and final.speed == pytest.approx(v_ref, abs=1e-12)
    assert final.x == pytest.approx(1.1, abs=1e-12) and final.x == pytest.approx(x_ref, abs=1e-12)

    distances = []
    for mu in (0.2, 0.4, 0.6, 0.9, 1.0):
        cfg = SimConfig(friction={"dry": mu, "wet": mu, "flooded": mu, "icy": mu, "debris": mu},
                        route_length=1000.0)
        stop = run(build_world(lone_ego_scenario(speed=15.0, set_speed=0.0), cfg), duration=40.0)
        distances.append(stop.states["ego"][-1].x)
    assert all(d1 > d2 for d1, d2 in zip(distances, distances[1:]))


@pytest.mark.criterion(11, "metric fixtures: reversal rate 120/min, TTC 4.0 s, zero SDs at constant speed")
def test_criterion_11_metric_fixtures():
    from scenegen.misbehavior import ttc

    report = compute_metrics(steering_square_wave_log())
    assert report.steering_reversal_rate == pytest.approx(120.0, abs=1e-9)
    ego, other = ttc_pair(gap=20.0, ego_speed=10.0, other_speed=5.0)
    assert ttc(ego, other) == pytest.approx(4.0, abs=1e-9)
    flat = compute_metrics(constant_speed_log())
    assert flat.speed_sd == 0.0 and flat.lateral_position_sd == 0.0 and flat.steering_sd == 0.0
    assert flat.steering_reversal_rate == 0.0


@pytest.mark.criterion(12, "end-to-end pipeline finishes in under 5 minutes with all reports written")
def test_criterion_12_pipeline(tmp_path):
    start = time.perf_counter()
    code = cli.main(["pipeline", "--out", str(tmp_path), "--jobs", str(JOBS)])
    elapsed = time.perf_counter() - start
    print(f"criterion 12: pipeline {elapsed:.1f} s")
    assert code == 0
    assert elapsed < 300.0
    for name in ("accidents.csv", "net.json", "report.json", "refutations.json", "risk_scenarios.json",
                 "generation_report.json", "metrics.csv", "campaign_summary.json", "campaign_summary_random.json",
                 "pipeline_report.json"):
        assert (tmp_path / name).is_file(), name
    report = json.loads((tmp_path / "pipeline_report.json").read_text())
    assert report["seed"] == 0 and report["shd"] is not None
