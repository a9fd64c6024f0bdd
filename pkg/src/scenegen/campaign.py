"""Execute logical risk scenarios in the simulator and measure how often they reveal risk."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .driving_sim import SimConfig, build_world, run
from .misbehavior import MetricConfig, MetricReport, Verdict, classify, compute_metrics
from .scenario import ConcreteScenario, LogicalScenario, concretize


@dataclass(frozen=True)
class RunOutcome:
    scenario: ConcreteScenario
    report: MetricReport
    verdict: Verdict


def execute(scenario: ConcreteScenario, sim_config: SimConfig | None = None,
            metric_config: MetricConfig | None = None) -> RunOutcome:
    log = run(build_world(scenario, sim_config))
    report = compute_metrics(log, metric_config)
    return RunOutcome(scenario, report, classify(report, metric_config))


def _execute_args(args):
    return execute(*args)


def execute_many(scenarios: Sequence[ConcreteScenario], sim_config=None, metric_config=None,
                 jobs: int = 1) -> list[RunOutcome]:
    """Run each scenario once; results keep input order regardless of ``jobs``."""
    args = [(s, sim_config, metric_config) for s in scenarios]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_execute_args, args, chunksize=max(1, len(args) // (4 * jobs))))
    return [execute(*a) for a in args]


def round_robin(logicals: Sequence[LogicalScenario], budget: int, seed: int = 0) -> list[ConcreteScenario]:
    """``budget`` concrete scenarios cycling through ``logicals`` in order.

    The ``v``-th visit of a logical scenario draws its instance with seed
    ``seed * 100003 + v`` so repeated visits explore new parameters.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if not logicals:
        return []
    out = []
    for k in range(budget):
        visit, idx = divmod(k, len(logicals))
        out.append(concretize(logicals[idx], 1, seed=seed * 100003 + visit)[0])
    return out


def risk_yield(outcomes: Sequence[RunOutcome]) -> float:
    """Fraction of runs whose verdict found a risk."""
    if not outcomes:
        return 0.0
    return sum(o.verdict.risk_found for o in outcomes) / len(outcomes)
