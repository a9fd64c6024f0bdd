"""Command-line front end: synth, learn, validate, generate, run and the chained pipeline."""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .accident_data import PatternCatalog, mine_static_patterns, parse_records, synthesize_dataset, write_records
from .bayesnet import CausalBayesNet, fit_parameters
from .campaign import execute_many, risk_yield, round_robin
from .causal_discovery import (
    DiscoveryParams,
    KnowledgeConstraints,
    bdeu_score,
    greedy_search,
    sid,
    shd,
    to_cpdag,
)
from .causal_validation import estimate_effect, refute_all
from .driving_sim import SimConfig, build_world, run
from .fixtures import default_fixture_net
from .misbehavior import MetricConfig, write_reports_csv, write_reports_json
from .risk_generator import (
    DEFAULT_THRESHOLD,
    generate,
    random_baseline_generate,
    read_scenarios_json,
    write_scenarios_json,
    write_summary_csv,
)
from .scenario import DEFAULT_ACTIONS, DEFAULT_PATTERNS, default_seeds, parse_scenario
from .schema import CANONICAL_SCHEMA, STATIC_FACTORS

log = logging.getLogger("scenegen")

DEFAULT_TIERS = (
    ("weather", "lighting", "road_damage", "junction"),
    ("surface_condition", "obstacle", "actor_action"),
    ("severity",),
)


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


@dataclass
class PipelineConfig:
    seed: int = 0
    out: str = "out"
    jobs: int = 1
    paths: dict = field(default_factory=dict)
    synth: dict = field(default_factory=lambda: {"n": 50000})
    discovery: dict = field(default_factory=dict)
    generator: dict = field(default_factory=lambda: {"threshold": DEFAULT_THRESHOLD, "method": "cbn", "budget": 100,
                                                     "patterns": 6})
    simulator: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    run: dict = field(default_factory=lambda: {"budget": None})
    validation: dict = field(default_factory=lambda: {"treatment": ["actor_action", "sudden_brake", "none"],
                                                      "outcome": "severity"})

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        p = Path(path)
        if not p.exists():
            raise CliError(f"config not found: {p}", 2)
        try:
            payload = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CliError(f"config is not valid JSON: {exc}", 2) from None
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}", 2)
        base = cls()
        for key, value in payload.items():
            current = getattr(base, key)
            if isinstance(current, dict) and isinstance(value, dict):
                merged = dict(current)
                merged.update(value)
                value = merged
            setattr(base, key, value)
        return base

    def path(self, key: str, default: str | None = None, must_exist: bool = True, label: str | None = None):
        value = self.paths.get(key, default)
        if value is None:
            return None
        p = Path(value)
        if must_exist and not p.exists():
            raise CliError(f"{label or key} not found: {p}", 2)
        return p

    def discovery_params(self) -> DiscoveryParams:
        try:
            return DiscoveryParams(**self.discovery)
        except (TypeError, ValueError) as exc:
            raise CliError(f"invalid discovery parameters: {exc}", 2) from None

    def sim_config(self) -> SimConfig:
        return SimConfig.from_json(self.simulator) if self.simulator else SimConfig()

    def metric_config(self) -> MetricConfig:
        return MetricConfig(**self.metrics)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def _out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seeds(cfg: PipelineConfig):
    folder = cfg.path("seeds_dir")
    if folder is None:
        return default_seeds()
    files = sorted(folder.glob("*.json"))
    if not files:
        raise CliError(f"no seed scenarios in {folder}", 2)
    return [parse_scenario(f) for f in files]


def _default_constraints() -> KnowledgeConstraints:
    return KnowledgeConstraints(tiers=DEFAULT_TIERS)


# ---------------------------------------------------------------- commands


def cmd_synth(cfg: PipelineConfig) -> dict:
    out = _out(cfg)
    truth = default_fixture_net()
    n = int(cfg.synth.get("n", 50000))
    data = synthesize_dataset(truth, n, cfg.seed)
    write_records(data, out / "accidents.csv")
    _write_json(out / "truth_net.json", {**truth.to_json(), "seed": cfg.seed})
    _write_json(out / "constraints.json", _default_constraints().to_json())
    log.info("synthesised %d records", n)
    return {"records": n, "seed": cfg.seed}


def cmd_learn(cfg: PipelineConfig) -> dict:
    out = _out(cfg)
    data_path = cfg.path("data", str(out / "accidents.csv"), label="data")
    constraints_path = cfg.path("constraints", None, must_exist=False)
    if constraints_path is not None and not constraints_path.exists():
        raise CliError("constraints not found", 2)
    try:
        constraints = KnowledgeConstraints.load(constraints_path) if constraints_path else _default_constraints()
    except (ValueError, KeyError) as exc:
        raise CliError(f"invalid constraints: {exc}", 2) from None
    params = cfg.discovery_params()
    data = parse_records(data_path)
    try:
        constraints.check_variables(data.schema.names)
    except ValueError as exc:
        raise CliError(f"invalid constraints: {exc}", 2) from None
    t0 = time.perf_counter()
    dag = greedy_search(data, constraints, params, seed=cfg.seed)
    net = fit_parameters(dag, data, pseudocount=1.0)
    elapsed = time.perf_counter() - t0
    _write_json(out / "net.json", {**net.to_json(), "seed": cfg.seed})
    (out / "graph.dot").write_text(dag.to_dot(), encoding="utf-8")
    report = {
        "seed": cfg.seed,
        "records": len(data),
        "edges": [list(e) for e in sorted(dag.edges)],
        "bdeu": bdeu_score(dag, data, params.ess),
        "params": asdict(params),
    }
    truth_path = cfg.path("truth", None, must_exist=False)
    if truth_path is not None:
        if not truth_path.exists():
            raise CliError(f"truth network not found: {truth_path}", 2)
        truth = CausalBayesNet.load(truth_path)
        report["shd"] = shd(to_cpdag(dag), to_cpdag(truth.dag))
        report["sid"] = sid(truth.dag, dag)
    report["metadata"] = {"seconds": elapsed, "version": __version__}
    _write_json(out / "report.json", report)
    log.info("learned %d edges", len(dag.edges))
    return report


def cmd_validate(cfg: PipelineConfig) -> dict:
    out = _out(cfg)
    net = CausalBayesNet.load(cfg.path("net", str(out / "net.json"), label="net"))
    data = parse_records(cfg.path("data", str(out / "accidents.csv"), label="data"))
    treatment = cfg.validation["treatment"]
    treatment = tuple(treatment) if isinstance(treatment, list) else treatment
    outcome = cfg.validation["outcome"]
    estimate = estimate_effect(net, treatment, outcome)
    reports = refute_all(net, data, treatment, outcome, seed=cfg.seed)
    payload = {
        "seed": cfg.seed,
        "estimate": estimate.to_json(),
        "refutations": [r.to_json() for r in reports],
    }
    _write_json(out / "refutations.json", payload)
    return payload


def _patterns(cfg: PipelineConfig):
    p = cfg.path("patterns", None, must_exist=False)
    if p is not None:
        if not p.exists():
            raise CliError(f"patterns not found: {p}", 2)
        return list(PatternCatalog.load(p).patterns)
    return list(DEFAULT_PATTERNS)


def cmd_generate(cfg: PipelineConfig, method: str | None = None) -> dict:
    out = _out(cfg)
    method = method or cfg.generator.get("method", "cbn")
    seeds = _seeds(cfg)
    if "net" in cfg.paths:
        net = CausalBayesNet.load(cfg.path("net", label="net"))
    elif (out / "net.json").exists():
        net = CausalBayesNet.load(out / "net.json")
    else:
        log.warning("no learned network configured; using the shipped fixture network")
        net = default_fixture_net()
    if method == "cbn":
        scenarios, report = generate(seeds, _patterns(cfg), DEFAULT_ACTIONS, net,
                                     float(cfg.generator.get("threshold", DEFAULT_THRESHOLD)), jobs=cfg.jobs)
    elif method == "random":
        budget = int(cfg.generator.get("budget", 100))
        if budget < 1:
            raise CliError("budget must be at least 1", 2)
        scenarios, report = random_baseline_generate(seeds, cfg.seed, budget, net)
    else:
        raise CliError(f"unknown method {method!r}", 2)
    suffix = "" if method == "cbn" else f"_{method}"
    write_scenarios_json(scenarios, out / f"risk_scenarios{suffix}.json", seed=cfg.seed)
    write_summary_csv(scenarios, out / f"risk_scenarios{suffix}.csv")
    payload = report.to_json()
    timings = payload.pop("phase_seconds")
    payload.update({
        "method": method,
        "seed": cfg.seed,
        "yield_per_iteration": report.scenarios_emitted / report.iterations if report.iterations else 0.0,
        "metadata": {"phase_seconds": timings},
    })
    _write_json(out / f"generation_report{suffix}.json", payload)
    return payload


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def cmd_run(cfg: PipelineConfig, method: str | None = None) -> dict:
    out = _out(cfg)
    method = method or cfg.generator.get("method", "cbn")
    suffix = "" if method == "cbn" else f"_{method}"
    src = cfg.path("scenarios", str(out / f"risk_scenarios{suffix}.json"), label="scenarios")
    risk_scenarios = read_scenarios_json(src)
    budget = cfg.run.get("budget")
    logicals = [s.scenario for s in risk_scenarios]
    t0 = time.perf_counter()
    if not logicals:
        concrete = []
    else:
        concrete = round_robin(logicals, int(budget) if budget else len(logicals), seed=cfg.seed)
    sim_config, metric_config = cfg.sim_config(), cfg.metric_config()
    outcomes = execute_many(concrete, sim_config, metric_config, jobs=cfg.jobs)
    logs_dir = out / f"logs{suffix}"
    logs_dir.mkdir(parents=True, exist_ok=True)
    if cfg.run.get("write_logs", True):
        for k, scenario in enumerate(concrete):
            stem = f"{k:04d}_{_safe(scenario.id)}"
            simlog = run(build_world(scenario, sim_config))
            simlog.write_csv(logs_dir / f"{stem}.csv")
            simlog.write_events(logs_dir / f"{stem}.events.json")
    rows = [(o.scenario.id, o.report, o.verdict) for o in outcomes]
    write_reports_csv(rows, out / f"metrics{suffix}.csv")
    write_reports_json(rows, out / f"metrics{suffix}.json")
    risky = sum(o.verdict.risk_found for o in outcomes)
    summary = {
        "method": method,
        "seed": cfg.seed,
        "scenarios": len(concrete),
        "startup_count": len(outcomes),
        "risk_scenarios_found": risky,
        "risk_yield": risk_yield(outcomes),
        "runs_per_risk_scenario": (len(outcomes) / risky) if risky else None,
        "metadata": {"wall_seconds": time.perf_counter() - t0},
    }
    _write_json(out / f"campaign_summary{suffix}.json", summary)
    return summary


def cmd_pipeline(cfg: PipelineConfig) -> dict:
    out = _out(cfg)
    t0 = time.perf_counter()
    stages = {}
    given = dict(cfg.paths)
    cmd_synth(cfg)
    cfg.paths.setdefault("data", str(out / "accidents.csv"))
    cfg.paths.setdefault("constraints", str(out / "constraints.json"))
    cfg.paths.setdefault("truth", str(out / "truth_net.json"))
    stages["learn"] = cmd_learn(cfg)
    cfg.paths.setdefault("net", str(out / "net.json"))
    stages["validate"] = cmd_validate(cfg)
    if "patterns" not in given:
        # mine risk patterns from the harmful accidents in the data set
        data = parse_records(cfg.path("data"))
        harmful = data.take(data.column("severity") > 0)
        catalog = mine_static_patterns(harmful, STATIC_FACTORS, int(cfg.generator.get("patterns", 6)), seed=cfg.seed)
        _write_json(out / "patterns.json", {**catalog.to_json(), "seed": cfg.seed})
        stages["patterns"] = catalog.to_json()
    stages["generate"] = cmd_generate(cfg, "cbn")
    stages["generate_random"] = cmd_generate(cfg, "random")
    budget = cfg.run.get("budget") or cfg.generator.get("budget", 100)
    cfg.run["budget"] = budget
    stages["run"] = cmd_run(cfg, "cbn")
    stages["run_random"] = cmd_run(cfg, "random")
    cfg.paths = given
    report = {
        "seed": cfg.seed,
        "shd": stages["learn"].get("shd"),
        "sid": stages["learn"].get("sid"),
        "refutations": stages["validate"]["refutations"],
        "generation": {
            "cbn": {k: stages["generate"][k] for k in ("iterations", "scenarios_emitted")},
            "random": {k: stages["generate_random"][k] for k in ("iterations", "scenarios_emitted")},
        },
        "campaign": {
            "cbn": {k: v for k, v in stages["run"].items() if k != "metadata"},
            "random": {k: v for k, v in stages["run_random"].items() if k != "metadata"},
        },
        "metadata": {"wall_seconds": time.perf_counter() - t0, "version": __version__},
    }
    _write_json(out / "pipeline_report.json", report)
    return report


COMMANDS = {
    "synth": cmd_synth,
    "learn": cmd_learn,
    "validate": cmd_validate,
    "generate": cmd_generate,
    "run": cmd_run,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON pipeline configuration")
    common.add_argument("--seed", type=int, help="global random seed")
    common.add_argument("--jobs", type=int, help="parallel worker processes")
    common.add_argument("--out", help="output directory")
    common.add_argument("--method", choices=("cbn", "random"), help="scenario generation method")
    common.add_argument("--budget", type=int, help="iterations (random) and simulator runs")
    common.add_argument("--data", help="accident CSV")
    common.add_argument("--constraints", help="knowledge constraints JSON")
    common.add_argument("--net", help="network JSON")
    common.add_argument("--truth", help="ground-truth network JSON for SHD/SID")
    common.add_argument("--scenarios", help="risk scenario JSON to run")
    common.add_argument("--patterns", help="pattern catalog JSON")
    parser = argparse.ArgumentParser(prog="scenegen", description=__doc__, parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


_FLAG_NAMES = ("config", "seed", "jobs", "out", "method", "budget", "data", "constraints", "net", "truth",
               "scenarios", "patterns")


def _config_from_args(args) -> PipelineConfig:
    args = argparse.Namespace(**{k: getattr(args, k, None) for k in _FLAG_NAMES}, command=args.command)
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        if args.jobs < 1:
            raise CliError("--jobs must be at least 1", 2)
        cfg.jobs = args.jobs
    if args.out is not None:
        cfg.out = args.out
    if args.method is not None:
        cfg.generator["method"] = args.method
    if args.budget is not None:
        if args.budget < 1:
            raise CliError("--budget must be at least 1", 2)
        cfg.generator["budget"] = args.budget
        cfg.run["budget"] = args.budget
    for key in ("data", "constraints", "net", "truth", "scenarios", "patterns"):
        value = getattr(args, key)
        if value is not None:
            cfg.paths[key] = value
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SCENEGEN_LOG", "WARNING").upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        COMMANDS[args.command](cfg)
    except CliError as exc:
        print(json.dumps({"error": str(exc), "code": exc.code}), file=sys.stderr)
        return exc.code
    except Exception as exc:  # noqa: BLE001 - reported as machine-readable failure
        log.debug("command failed", exc_info=True)
        print(json.dumps({"error": str(exc), "type": type(exc).__name__, "code": 1}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
