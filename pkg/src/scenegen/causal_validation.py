"""Backdoor (parent) adjustment effect estimates and three refutation checks."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .accident_data import Dataset
from .bayesnet import CausalBayesNet, Cpt, Dag, fit_parameters, infer_joint
from .schema import SEVERITY_VALUES, VariableSchema

RELATIVE_TOLERANCE = 0.10
NEAR_ZERO = 0.01


@dataclass(frozen=True)
class EffectEstimate:
    treatment: str
    treated_state: str
    baseline_state: str
    outcome: str
    value: float
    adjustment_set: tuple[str, ...]
    skipped_strata: int = 0

    def __post_init__(self):
        if self.treatment in self.adjustment_set or self.outcome in self.adjustment_set:
            raise ValueError("adjustment set must exclude treatment and outcome")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RefutationReport:
    method: str
    estimated_effect: float
    new_effect: float
    p_value: float | None
    confidence: str

    def __post_init__(self):
        if self.method not in ("RCC", "PTR", "DSR"):
            raise ValueError(f"unknown refutation method {self.method!r}")
        if (self.p_value is None) != (self.method == "RCC"):
            raise ValueError("p_value is required for PTR and DSR and absent for RCC")
        if self.confidence not in ("High", "Low"):
            raise ValueError("confidence must be High or Low")

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "estimated_effect": self.estimated_effect,
            "new_effect": self.new_effect,
            "p_value": self.p_value,
            "confidence": self.confidence,
        }


def default_value_map(schema: VariableSchema, outcome: str) -> dict[str, float]:
    """Severity uses its ordinal values; other outcomes use numeric labels or state indices."""
    states = schema.states(outcome)
    if outcome == "severity" and set(states) == set(SEVERITY_VALUES):
        return dict(SEVERITY_VALUES)
    try:
        return {s: float(s) for s in states}
    except ValueError:
        return {s: float(k) for k, s in enumerate(states)}


def _resolve_treatment(schema, treatment):
    if isinstance(treatment, str):
        states = schema.states(treatment)
        return treatment, states[1], states[0]
    name, treated, baseline = treatment
    schema.state_index(name, treated)
    schema.state_index(name, baseline)
    return name, treated, baseline


def estimate_effect(net: CausalBayesNet, treatment, outcome: str, value_map: Mapping[str, float] | None = None,
                    adjustment: Sequence[str] | None = None) -> EffectEstimate:
    """Average treatment effect by adjusting for the treatment's parents.

    ``treatment`` is a variable name (second state vs first) or a triple
    ``(variable, treated_state, baseline_state)``. Strata where either arm has
    zero probability are skipped and the remaining weights renormalised.
    """
    schema = net.schema
    t_name, treated, baseline = _resolve_treatment(schema, treatment)
    if schema.arity(t_name) < 2:
        raise ValueError("treatment needs at least two states")
    if outcome == t_name:
        raise ValueError("outcome must differ from treatment")
    values = dict(value_map or default_value_map(schema, outcome))
    y = np.array([values[s] for s in schema.states(outcome)])
    if adjustment is None:
        z = net.parents(t_name)
        if outcome in z:
            # an ancestor of the treatment cannot respond to intervening on it
            return EffectEstimate(t_name, treated, baseline, outcome, 0.0, tuple(v for v in z if v != outcome))
    else:
        z = tuple(adjustment)
    joint = infer_joint(net, [*z, t_name, outcome])  # axes (*z, t, y)
    ti, bi = schema.state_index(t_name, treated), schema.state_index(t_name, baseline)
    flat = joint.reshape(-1, schema.arity(t_name), schema.arity(outcome))
    p_z = flat.sum(axis=(1, 2))
    total = 0.0
    weight = 0.0
    skipped = 0
    for k in range(flat.shape[0]):
        if p_z[k] <= 0:
            continue
        a, b = flat[k, ti], flat[k, bi]
        if a.sum() <= 0 or b.sum() <= 0:
            skipped += 1
            continue
        total += p_z[k] * (a @ y / a.sum() - b @ y / b.sum())
        weight += p_z[k]
    value = total / weight if weight > 0 else 0.0
    return EffectEstimate(t_name, treated, baseline, outcome, float(value), z, skipped)


def intervene(net: CausalBayesNet, variable: str, state: str) -> CausalBayesNet:
    """Mutilated network for ``do(variable = state)``: incoming edges cut, point-mass CPT."""
    dag = Dag(net.dag.nodes, [e for e in net.dag.edges if e[1] != variable])
    cpts = dict(net.cpts)
    row = np.zeros((1, net.schema.arity(variable)))
    row[0, net.schema.state_index(variable, state)] = 1.0
    cpts[variable] = Cpt(variable, (), row)
    return CausalBayesNet(net.schema, dag, cpts)


def _confidence(original: float, new: float) -> str:
    if abs(original) < NEAR_ZERO:
        return "High" if abs(new - original) <= NEAR_ZERO else "Low"
    return "High" if abs(new - original) <= RELATIVE_TOLERANCE * abs(original) else "Low"


def _refit_effect(dag: Dag, data: Dataset, treatment, outcome, value_map) -> float:
    net = fit_parameters(dag, data, pseudocount=0.0)
    return estimate_effect(net, treatment, outcome, value_map).value


def _align(net: CausalBayesNet, data: Dataset) -> Dataset:
    if data.schema == net.schema:
        return data
    return Dataset(net.schema, data.columns(net.schema.names))


def refute_random_common_cause(net: CausalBayesNet, data: Dataset, treatment, outcome: str, seed: int = 0,
                               value_map=None, covariate_states: int = 2) -> RefutationReport:
    """Add an independent uniform covariate as a parent of treatment and outcome and re-estimate."""
    data = _align(net, data)
    t_name = _resolve_treatment(net.schema, treatment)[0]
    original = _refit_effect(net.dag, data, treatment, outcome, value_map)
    rng = np.random.default_rng(seed)
    name = "_random_common_cause"
    column = rng.integers(0, covariate_states, size=len(data))
    augmented = data.with_column(name, [str(k) for k in range(covariate_states)], column)
    dag = Dag(net.dag.nodes + (name,), list(net.dag.edges) + [(name, t_name), (name, outcome)])
    new = _refit_effect(dag, augmented, treatment, outcome, value_map)
    return RefutationReport("RCC", original, new, None, _confidence(original, new))


def refute_placebo_treatment(net: CausalBayesNet, data: Dataset, treatment, outcome: str, n_placebos: int = 20,
                             seed: int = 0, value_map=None) -> RefutationReport:
    """Replace the treatment column by permutations; a sound estimate should drop to about zero."""
    if n_placebos < 20:
        raise ValueError("n_placebos must be at least 20")
    data = _align(net, data)
    t_name = _resolve_treatment(net.schema, treatment)[0]
    original = _refit_effect(net.dag, data, treatment, outcome, value_map)
    rng = np.random.default_rng(seed)
    column = data.column(t_name)
    effects = []
    for _ in range(n_placebos):
        placebo = data.replace_column(t_name, rng.permutation(column))
        effects.append(_refit_effect(net.dag, placebo, treatment, outcome, value_map))
    effects = np.asarray(effects)
    mean = float(effects.mean())
    p = float(np.mean(np.abs(effects) >= abs(original)))
    bound = RELATIVE_TOLERANCE * abs(original) if abs(original) >= NEAR_ZERO else NEAR_ZERO
    confidence = "High" if abs(mean) <= bound else "Low"
    return RefutationReport("PTR", original, mean, p, confidence)


def refute_data_subset(net: CausalBayesNet, data: Dataset, treatment, outcome: str, subset_fraction: float = 0.8,
                       n_subsets: int = 20, seed: int = 0, value_map=None) -> RefutationReport:
    """Re-estimate on random subsets; a stable estimate should barely move."""
    if not 0 < subset_fraction < 1:
        raise ValueError("subset_fraction must lie strictly between 0 and 1")
    if n_subsets < 20:
        raise ValueError("n_subsets must be at least 20")
    data = _align(net, data)
    size = int(math.floor(subset_fraction * len(data)))
    if size < 1:
        raise ValueError("subset is too small to fit parameters")
    original = _refit_effect(net.dag, data, treatment, outcome, value_map)
    rng = np.random.default_rng(seed)
    effects = []
    for _ in range(n_subsets):
        index = np.sort(rng.choice(len(data), size=size, replace=False))
        effects.append(_refit_effect(net.dag, data.take(index), treatment, outcome, value_map))
    effects = np.asarray(effects)
    mean = float(effects.mean())
    deviations = effects - original
    p = float(np.mean(np.abs(deviations) > abs(deviations.mean())))
    return RefutationReport("DSR", original, mean, p, _confidence(original, mean))


def refute_all(net, data, treatment, outcome, seed: int = 0, value_map=None) -> list[RefutationReport]:
    return [
        refute_random_common_cause(net, data, treatment, outcome, seed=seed, value_map=value_map),
        refute_placebo_treatment(net, data, treatment, outcome, seed=seed, value_map=value_map),
        refute_data_subset(net, data, treatment, outcome, seed=seed, value_map=value_map),
    ]


def write_reports(reports: Sequence[RefutationReport], path, estimate: EffectEstimate | None = None) -> None:
    payload = {"refutations": [r.to_json() for r in reports]}
    if estimate is not None:
        payload["estimate"] = estimate.to_json()
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")
