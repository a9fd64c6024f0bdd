"""Risk scenario generation guided by a causal Bayesian network, and a random baseline.

For every seed scenario and static risk pattern whose preconditions hold, the
network ranks risky actions by the posterior probability of a harmful
outcome; each surviving, applicable action yields a logical risk scenario
scored by severity times exposure.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .bayesnet import CausalBayesNet, ZeroProbabilityEvidence, evidence_probability, infer_posterior
from .scenario import (
    DEFAULT_ACTIONS,
    FunctionalScenario,
    LogicalScenario,
    RiskAction,
    StaticCombination,
    precond,
    to_logical,
)
from .schema import SEVERITY_VALUES, STATIC_FACTORS

DEFAULT_THRESHOLD = 0.35
HARMFUL = ("injury", "fatal")


@dataclass(frozen=True)
class RiskScenario:
    scenario: LogicalScenario
    severity: float
    exposure: float
    risk_priority: float
    provenance: tuple[str, str, str]
    risk: float | None = None

    def __post_init__(self):
        if self.severity < 0 or not 0.0 <= self.exposure <= 1.0:
            raise ValueError("severity must be non-negative and exposure a probability")
        if abs(self.risk_priority - self.severity * self.exposure) > 1e-12:
            raise ValueError("risk priority must equal severity times exposure")

    def sort_key(self):
        return (-self.risk_priority, *self.provenance)

    def to_json(self) -> dict:
        seed, pattern, action = self.provenance
        return {
            "seed": seed,
            "pattern": pattern,
            "action": action,
            "severity": self.severity,
            "exposure": self.exposure,
            "risk_priority": self.risk_priority,
            "risk": self.risk,
            "scenario": self.scenario.to_json(),
        }

    @classmethod
    def from_json(cls, payload: dict, catalog: Sequence[RiskAction] = DEFAULT_ACTIONS) -> "RiskScenario":
        return cls(
            scenario=LogicalScenario.from_json(payload["scenario"], catalog),
            severity=payload["severity"],
            exposure=payload["exposure"],
            risk_priority=payload["risk_priority"],
            provenance=(payload["seed"], payload["pattern"], payload["action"]),
            risk=payload.get("risk"),
        )


@dataclass
class GenerationReport:
    iterations: int = 0
    scenarios_emitted: int = 0
    per_seed: dict = field(default_factory=dict)
    phase_seconds: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "scenarios_emitted": self.scenarios_emitted,
            "per_seed": self.per_seed,
            "phase_seconds": self.phase_seconds,
        }


def _check_static(evidence: Mapping[str, str]) -> None:
    for key in evidence:
        if key not in STATIC_FACTORS:
            raise ValueError(f"evidence variable {key!r} is not a static factor")


def action_risk(net: CausalBayesNet, evidence: Mapping[str, str], action: RiskAction,
                severity_var: str = "severity", action_var: str = "actor_action") -> float:
    """Posterior probability of a harmful outcome given the environment and the action."""
    post = infer_posterior(net, severity_var, {**evidence, action_var: action.action})
    states = net.schema.states(severity_var)
    return float(sum(post[states.index(s)] for s in HARMFUL if s in states))


def deduce(evidence: Mapping[str, str], net: CausalBayesNet, actions: Sequence[RiskAction] = DEFAULT_ACTIONS,
           threshold: float = DEFAULT_THRESHOLD) -> list[tuple[RiskAction, float]]:
    """Actions whose harmful-outcome posterior reaches ``threshold``, most risky first.

    Sorting is stable, so equal risks keep catalog order.
    """
    _check_static(evidence)
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    scored = [(a, action_risk(net, evidence, a)) for a in actions]
    kept = [(a, r) for a, r in scored if r >= threshold]
    return sorted(kept, key=lambda item: -item[1])


def calc_se(net: CausalBayesNet, evidence: Mapping[str, str], action: RiskAction,
            value_map: Mapping[str, float] = SEVERITY_VALUES) -> tuple[float, float]:
    """Expected severity under the configuration and the exposure of its environment."""
    _check_static(evidence)
    post = infer_posterior(net, "severity", {**evidence, "actor_action": action.action})
    states = net.schema.states("severity")
    severity = float(sum(value_map[s] * post[k] for k, s in enumerate(states)))
    exposure = evidence_probability(net, evidence)
    return severity, exposure


def calc_rp(severity: float, exposure: float) -> float:
    if severity < 0:
        raise ValueError("severity must be non-negative")
    if not 0.0 <= exposure <= 1.0:
        raise ValueError("exposure must lie in [0, 1]")
    return severity * exposure


def _generate_seed(seed: FunctionalScenario, patterns: Sequence[StaticCombination], actions, net, threshold):
    scenarios = []
    stats = {"patterns_passing": 0, "iterations": 0, "emitted": 0}
    for pattern in patterns:
        current = to_logical(seed)
        if not precond(current, pattern):
            continue
        stats["patterns_passing"] += 1
        current = current.with_environment(pattern)
        evidence = current.environment_assignments()
        stats["iterations"] += len(actions)
        try:
            ranked = deduce(evidence, net, actions, threshold)
        except ZeroProbabilityEvidence:
            continue
        for action, risk in ranked:
            if not precond(current, action):
                continue
            logical = current.with_action(action)
            severity, exposure = calc_se(net, evidence, action)
            scenarios.append(
                RiskScenario(logical, severity, exposure, calc_rp(severity, exposure),
                             (seed.id, pattern.label, action.action), risk)
            )
    stats["emitted"] = len(scenarios)
    return seed.id, scenarios, stats


def generate(seeds: Sequence[FunctionalScenario], patterns, actions: Sequence[RiskAction] = DEFAULT_ACTIONS,
             net: CausalBayesNet | None = None, threshold: float = DEFAULT_THRESHOLD,
             jobs: int = 1) -> tuple[list[RiskScenario], GenerationReport]:
    """Enumerate (seed, pattern, action) risk scenarios ranked by risk priority."""
    if net is None:
        raise ValueError("a causal network is required")
    patterns = list(patterns)
    start = time.perf_counter()
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_generate_seed, seeds, [patterns] * len(seeds), [actions] * len(seeds),
                                  [net] * len(seeds), [threshold] * len(seeds)))
    else:
        parts = [_generate_seed(s, patterns, actions, net, threshold) for s in seeds]
    elapsed = time.perf_counter() - start
    report = GenerationReport()
    out = []
    for seed_id, scenarios, stats in parts:
        out.extend(scenarios)
        report.per_seed[seed_id] = stats
        report.iterations += stats["iterations"]
    out.sort(key=RiskScenario.sort_key)
    report.scenarios_emitted = len(out)
    report.phase_seconds = {"generate": elapsed}
    return out, report


def _applicable(seed: FunctionalScenario, action: RiskAction) -> bool:
    roles_ok = all(seed.has_role(r) for r in action.requires)
    return roles_ok and (action.road is None or action.road == seed.road)


def random_baseline_generate(seeds: Sequence[FunctionalScenario], rng_seed: int, budget: int,
                             net: CausalBayesNet | None = None,
                             actions: Sequence[RiskAction] = DEFAULT_ACTIONS) -> tuple[list[RiskScenario], GenerationReport]:
    """Uniformly random environments and actions, one scenario per iteration.

    Seeds are visited round-robin. Each static factor takes a uniform state and
    the action is drawn uniformly from the catalog; an action the seed cannot
    stage (missing actor or wrong road) degrades to the environment-only
    baseline. Risk priority is computed afterwards with ``net`` when given.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if not seeds:
        raise ValueError("at least one seed scenario is required")
    from .schema import CANONICAL_SCHEMA

    rng = np.random.default_rng(rng_seed)
    fallback = next((a for a in actions if a.action == "none"), None)
    start = time.perf_counter()
    out = []
    report = GenerationReport()
    for k in range(budget):
        seed = seeds[k % len(seeds)]
        env = {f: CANONICAL_SCHEMA.states(f)[int(rng.integers(CANONICAL_SCHEMA.arity(f)))] for f in STATIC_FACTORS}
        action = actions[int(rng.integers(len(actions)))]
        if not _applicable(seed, action):
            action = fallback if fallback is not None else action
        combination = StaticCombination.of(env, f"random#{k}")
        logical = to_logical(seed, environment=combination, action=action)
        if net is not None:
            severity, exposure = calc_se(net, env, action)
        else:
            severity, exposure = 0.0, 0.0
        out.append(RiskScenario(logical, severity, exposure, calc_rp(severity, exposure),
                                (seed.id, combination.label, action.action)))
        stats = report.per_seed.setdefault(seed.id, {"iterations": 0, "emitted": 0})
        stats["iterations"] += 1
        stats["emitted"] += 1
    out.sort(key=RiskScenario.sort_key)
    report.iterations = budget
    report.scenarios_emitted = len(out)
    report.phase_seconds = {"generate": time.perf_counter() - start}
    return out, report


def write_scenarios_json(scenarios: Sequence[RiskScenario], path, seed: int | None = None) -> None:
    """A bare list, or ``{"seed": ..., "scenarios": [...]}`` when a seed is given."""
    items = [s.to_json() for s in scenarios]
    payload = items if seed is None else {"seed": seed, "scenarios": items}
    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")


def read_scenarios_json(path, catalog: Sequence[RiskAction] = DEFAULT_ACTIONS) -> list[RiskScenario]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(payload, dict):
        payload = payload["scenarios"]
    return [RiskScenario.from_json(p, catalog) for p in payload]


def write_summary_csv(scenarios: Sequence[RiskScenario], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "pattern", "action", "S", "E", "RP"])
        for s in scenarios:
            writer.writerow([*s.provenance, repr(s.severity), repr(s.exposure), repr(s.risk_priority)])
