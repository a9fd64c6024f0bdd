"""Hand-specified reference networks used for synthesis, tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .bayesnet import CausalBayesNet, Cpt, Dag
from .schema import CANONICAL_SCHEMA, VariableSchema

# additive log-odds contributions to "at least injury" for the driving fixture
SEVERITY_BASE = -2.5
SEVERITY_WEIGHTS = {
    "lighting": {"daylight": 0.0, "dusk_dawn": 0.6, "dark_lit": 0.4, "dark_unlit": 1.0},
    "surface_condition": {"dry": 0.0, "wet": 0.6, "flooded": 1.0, "icy": 1.2, "debris": 0.6},
    "obstacle": {"none": 0.0, "static_object": 0.4, "construction_zone": 0.8},
    "actor_action": {"none": 0.0, "sudden_brake": 1.4, "lane_change": 1.0, "pedestrian_dart": 1.8,
                     "run_red_light": 1.6},
}
FATAL_OFFSET = 2.0

DRIVING_EDGES = (
    ("weather", "surface_condition"),
    ("road_damage", "obstacle"),
    ("junction", "actor_action"),
    ("lighting", "severity"),
    ("surface_condition", "severity"),
    ("obstacle", "severity"),
    ("actor_action", "severity"),
)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def severity_row(z: float) -> list[float]:
    """Ordinal-logit severity distribution (property, injury, fatal) for log-odds ``z``."""
    at_least_injury = _sigmoid(z)
    fatal = _sigmoid(z - FATAL_OFFSET)
    return [1.0 - at_least_injury, at_least_injury - fatal, fatal]


def default_fixture_net() -> CausalBayesNet:
    """Accident-causation network over the canonical schema.

    Environment roots drive surface and obstacle states, the junction type
    drives which risky behaviours occur, and severity depends on lighting,
    surface, obstacle and the behaviour through an ordinal logit.
    """
    schema = CANONICAL_SCHEMA
    dag = Dag(schema.names, DRIVING_EDGES)
    cpts = {
        "weather": [[0.60, 0.20, 0.08, 0.05, 0.07]],
        "lighting": [[0.60, 0.15, 0.15, 0.10]],
        "road_damage": [[0.70, 0.15, 0.07, 0.08]],
        "junction": [[0.60, 0.40]],
        # rows: clear, rain, fog, snow, wind
        "surface_condition": [
            [0.85, 0.05, 0.01, 0.01, 0.08],
            [0.15, 0.55, 0.25, 0.02, 0.03],
            [0.55, 0.40, 0.02, 0.02, 0.01],
            [0.10, 0.30, 0.05, 0.50, 0.05],
            [0.55, 0.10, 0.02, 0.03, 0.30],
        ],
        # rows: none, worn_markings, potholes, construction
        "obstacle": [
            [0.92, 0.06, 0.02],
            [0.85, 0.10, 0.05],
            [0.60, 0.35, 0.05],
            [0.15, 0.25, 0.60],
        ],
        # rows: no junction, intersection
        "actor_action": [
            [0.40, 0.25, 0.20, 0.15, 0.00],
            [0.35, 0.15, 0.05, 0.20, 0.25],
        ],
    }
    w = SEVERITY_WEIGHTS
    rows = []
    for light in schema.states("lighting"):
        for surface in schema.states("surface_condition"):
            for obstacle in schema.states("obstacle"):
                for action in schema.states("actor_action"):
                    z = (SEVERITY_BASE + w["lighting"][light] + w["surface_condition"][surface]
                         + w["obstacle"][obstacle] + w["actor_action"][action])
                    rows.append(severity_row(z))
    cpts["severity"] = rows
    return CausalBayesNet(schema, dag, {k: Cpt(k, dag.parents(k), np.asarray(v)) for k, v in cpts.items()})


BENCHMARK_EDGES = (
    ("A", "C"), ("A", "D"), ("B", "D"), ("C", "E"), ("C", "F"),
    ("D", "F"), ("D", "H"), ("E", "G"), ("F", "G"),
)
BENCHMARK_TIERS = (("A", "B"), ("C", "D"), ("E", "F", "H"), ("G",))


def _binary(p_one) -> np.ndarray:
    p = np.asarray(p_one, dtype=float).reshape(-1, 1)
    return np.hstack([1.0 - p, p])


def benchmark_net() -> CausalBayesNet:
    """Eight binary variables with strong, balanced dependencies and three v-structures."""
    names = ("A", "B", "C", "D", "E", "F", "G", "H")
    schema = VariableSchema(tuple((n, ("0", "1")) for n in names))
    dag = Dag(names, BENCHMARK_EDGES)
    probs = {
        "A": [0.5],
        "B": [0.4],
        "C": [0.2, 0.8],
        "D": [0.1, 0.6, 0.7, 0.9],
        "E": [0.25, 0.8],
        "F": [0.15, 0.5, 0.6, 0.9],
        "G": [0.1, 0.5, 0.7, 0.9],
        "H": [0.3, 0.85],
    }
    return CausalBayesNet(schema, dag, {k: Cpt(k, dag.parents(k), _binary(v)) for k, v in probs.items()})


def confounder_net() -> CausalBayesNet:
    """Binary confounder ``Z`` of treatment ``X`` and outcome ``Y`` (also ``X -> Y``).

    Interventional contrast ``P(Y=1 | do(X=1)) - P(Y=1 | do(X=0))`` is 0.4.
    """
    schema = VariableSchema((("Z", ("0", "1")), ("X", ("0", "1")), ("Y", ("0", "1"))))
    dag = Dag(schema.names, [("Z", "X"), ("Z", "Y"), ("X", "Y")])
    cpts = {
        "Z": _binary([0.5]),
        "X": _binary([0.2, 0.8]),
        # rows (Z, X): 00, 01, 10, 11
        "Y": _binary([0.5, 0.9, 0.3, 0.7]),
    }
    return CausalBayesNet(schema, dag, {k: Cpt(k, dag.parents(k), v) for k, v in cpts.items()})
