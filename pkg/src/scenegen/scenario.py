"""Functional, logical and concrete driving scenarios and their precondition contracts.

Road frame used throughout: the ego lane centerline is ``y = 0`` heading ``+x``,
the opposing lane centerline is ``y = LANE_WIDTH`` heading ``-x``. The
intersection layout is described in :data:`INTERSECTION`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .schema import CANONICAL_SCHEMA, STATIC_FACTORS, SchemaError

MANEUVERS = ("lane_keeping", "pedestrian_crossing", "following", "overtaking", "left_turn_intersection")
ROLES = ("ego", "lead_vehicle", "oncoming_vehicle", "pedestrian", "obstacle")
ROADS = ("straight_two_lane", "intersection")
TRIGGER_CONDITIONS = ("gap_below", "time_elapsed", "ego_in_zone")

# maneuver -> (road, roles that must be declared)
MANEUVER_CONTRACTS = {
    "lane_keeping": ("straight_two_lane", ()),
    "pedestrian_crossing": ("straight_two_lane", ("pedestrian",)),
    "following": ("straight_two_lane", ("lead_vehicle",)),
    "overtaking": ("straight_two_lane", ("lead_vehicle", "oncoming_vehicle")),
    "left_turn_intersection": ("intersection", ("oncoming_vehicle",)),
}

LANE_WIDTH = 3.5
CAR = (4.6, 1.9)
PEDESTRIAN = (0.6, 0.6)
FOOTPRINTS = {
    "car": CAR,
    "pedestrian": PEDESTRIAN,
    "static_object": (0.8, 0.8),
    "construction_zone": (3.0, 1.2),
    "debris": (2.0, 1.6),
}

# left-turn geometry: approach along y=0, turn radius, northbound exit lane x
INTERSECTION = {
    "turn_start_x": 53.5,
    "turn_radius": 6.5,
    "exit_x": 60.0,
    "center": (58.25, 1.75),
    "ego_stop_line_x": 54.25,
    "oncoming_stop_line_x": 66.5,
    "crosswalk_y": 9.5,
    "exit_length": 90.0,
}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ActorRole:
    role: str
    required: bool = True


@dataclass(frozen=True)
class FunctionalScenario:
    id: str
    maneuver: str
    actors: tuple[ActorRole, ...]
    road: str
    environment: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "actors", tuple(self.actors))
        if isinstance(self.environment, Mapping):
            object.__setattr__(self, "environment", tuple(sorted(self.environment.items())))
        if self.maneuver not in MANEUVERS:
            raise ScenarioError(f"unknown maneuver {self.maneuver!r}")
        if self.road not in ROADS:
            raise ScenarioError(f"unknown road {self.road!r}")
        for a in self.actors:
            if a.role not in ROLES:
                raise ScenarioError(f"unknown actor role {a.role!r}")
        egos = [a for a in self.actors if a.role == "ego"]
        if len(egos) != 1:
            raise ScenarioError(f"scenario {self.id!r} must have exactly one ego, found {len(egos)}")
        road, needed = MANEUVER_CONTRACTS[self.maneuver]
        if self.road != road:
            raise ScenarioError(f"maneuver {self.maneuver!r} is incompatible with road {self.road!r}")
        for role in needed:
            if not any(a.role == role and a.required for a in self.actors):
                raise ScenarioError(f"maneuver {self.maneuver!r} needs a required {role!r} actor")
        for key, value in self.environment:
            _check_static(key, value)

    def has_role(self, role: str) -> bool:
        return any(a.role == role for a in self.actors)

    def required_roles(self) -> tuple[str, ...]:
        return tuple(a.role for a in self.actors if a.required)

    def with_actor(self, role: str, required: bool = False) -> "FunctionalScenario":
        return replace(self, actors=self.actors + (ActorRole(role, required),))

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "maneuver": self.maneuver,
            "road": self.road,
            "actors": [{"role": a.role, "required": a.required} for a in self.actors],
            "environment": dict(self.environment),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "FunctionalScenario":
        try:
            actors = tuple(ActorRole(a["role"], bool(a.get("required", True))) for a in payload["actors"])
            return cls(
                id=str(payload["id"]),
                maneuver=payload["maneuver"],
                actors=actors,
                road=payload["road"],
                environment=dict(payload.get("environment", {})),
            )
        except KeyError as exc:
            raise ScenarioError(f"scenario file is missing field {exc.args[0]!r}") from None


def parse_scenario(path) -> FunctionalScenario:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
    return FunctionalScenario.from_json(payload)


def default_seeds() -> list[FunctionalScenario]:
    """The five shipped seed scenarios, in a fixed order."""
    root = resources.files("scenegen") / "data" / "seeds"
    names = ["lane_keeping", "pedestrian_crossing", "following", "overtaking", "left_turn"]
    return [FunctionalScenario.from_json(json.loads((root / f"{n}.json").read_text())) for n in names]


def _check_static(key: str, value: str) -> None:
    if key not in STATIC_FACTORS:
        raise SchemaError(f"{key!r} is not a static environment factor")
    CANONICAL_SCHEMA.state_index(key, value)


@dataclass(frozen=True)
class StaticCombination:
    assignments: tuple[tuple[str, str], ...]
    label: str

    def __post_init__(self):
        order = {k: i for i, k in enumerate(STATIC_FACTORS)}
        pairs = tuple(sorted(((str(k), str(v)) for k, v in dict(self.assignments).items()), key=lambda kv: order.get(kv[0], 99)))
        for key, value in pairs:
            _check_static(key, value)
        object.__setattr__(self, "assignments", pairs)

    @classmethod
    def of(cls, assignments: Mapping[str, str], label: str | None = None) -> "StaticCombination":
        if label is None:
            label = " + ".join(f"{k}={v}" for k, v in assignments.items())
        return cls(tuple(assignments.items()), label)

    def as_dict(self) -> dict[str, str]:
        return dict(self.assignments)


DEFAULT_PATTERNS = (
    StaticCombination.of({"weather": "rain", "surface_condition": "flooded"}, "Heavy Rain + Flooded Road"),
    StaticCombination.of({"lighting": "dark_unlit"}, "Night without Streetlights"),
    StaticCombination.of(
        {"weather": "fog", "road_damage": "construction", "obstacle": "construction_zone"},
        "Dense Fog + Construction Area",
    ),
    StaticCombination.of({"weather": "wind", "surface_condition": "debris"}, "Strong Wind + Loose Dry Surface"),
    StaticCombination.of({"lighting": "dusk_dawn", "surface_condition": "wet"}, "Setting Sun + Slippery Roads"),
    StaticCombination.of({"lighting": "dusk_dawn", "road_damage": "worn_markings"}, "Sunset + Worn Road Markings"),
)


@dataclass(frozen=True)
class Trigger:
    condition: str
    threshold: float
    reference: str = "ego"

    def __post_init__(self):
        if self.condition not in TRIGGER_CONDITIONS:
            raise ScenarioError(f"unknown trigger condition {self.condition!r}")
        if not self.threshold > 0:
            raise ScenarioError("trigger threshold must be positive")


@dataclass(frozen=True)
class RiskAction:
    """A risky behaviour of one actor with its structural precondition.

    ``requires`` lists roles that must be declared by the scenario and ``road``
    (if set) the road type it needs. The ``none`` entry is an environment-only
    baseline and is the one action allowed to carry no trigger.
    """

    actor: str
    action: str
    trigger: Trigger | None
    requires: tuple[str, ...] = ()
    road: str | None = None
    threshold_range: tuple[float, float] | None = None

    def __post_init__(self):
        CANONICAL_SCHEMA.state_index("actor_action", self.action)
        if self.action == "none":
            if self.trigger is not None:
                raise ScenarioError("the baseline action takes no trigger")
        elif self.trigger is None:
            raise ScenarioError(f"action {self.action!r} needs a trigger")
        if self.actor not in ROLES:
            raise ScenarioError(f"unknown actor role {self.actor!r}")


DEFAULT_ACTIONS = (
    RiskAction("lead_vehicle", "sudden_brake", Trigger("time_elapsed", 4.0), ("lead_vehicle",), None, (3.0, 6.0)),
    RiskAction(
        "lead_vehicle",
        "lane_change",
        Trigger("gap_below", 35.0, reference="obstacle"),
        ("lead_vehicle", "obstacle"),
        "straight_two_lane",
        (30.0, 45.0),
    ),
    RiskAction("pedestrian", "pedestrian_dart", Trigger("gap_below", 22.0), ("pedestrian",), None, (18.0, 28.0)),
    RiskAction(
        "oncoming_vehicle",
        "run_red_light",
        Trigger("ego_in_zone", 12.0),
        ("oncoming_vehicle",),
        "intersection",
        (8.0, 14.0),
    ),
    RiskAction("ego", "none", None),
)


def action_by_name(name: str, catalog: Sequence[RiskAction] = DEFAULT_ACTIONS) -> RiskAction:
    for a in catalog:
        if a.action == name:
            return a
    raise KeyError(name)


def pattern_requirements(item: StaticCombination) -> tuple[tuple[str, ...], str | None]:
    """Contract of a static combination: obstacles need an obstacle slot on a straight road."""
    if item.as_dict().get("obstacle", "none") != "none":
        return ("obstacle",), "straight_two_lane"
    return (), None


def precond(scenario, item) -> bool:
    """True iff ``scenario`` provides everything ``item`` needs and does not contradict it."""
    functional = scenario.functional if isinstance(scenario, LogicalScenario) else scenario
    if isinstance(item, StaticCombination):
        roles, road = pattern_requirements(item)
        current = dict(functional.environment)
        if isinstance(scenario, LogicalScenario):
            current.update(scenario.environment.as_dict())
        for key, value in item.assignments:
            if key in current and current[key] != value:
                return False
    elif isinstance(item, RiskAction):
        roles, road = item.requires, item.road
        if isinstance(scenario, LogicalScenario) and scenario.action is not None:
            if scenario.action.action not in ("none", item.action):
                return False
    else:
        raise TypeError(f"cannot check a precondition for {type(item).__name__}")
    if road is not None and functional.road != road:
        return False
    return all(functional.has_role(r) for r in roles)


# logical parameter ranges per maneuver; trigger thresholds come from the action
DEFAULT_RANGES = {
    "lane_keeping": {"ego_speed": (12.0, 16.0), "ped_distance": (50.0, 80.0), "dart_speed": (2.5, 3.5),
                     "env_obstacle_distance": (50.0, 90.0)},
    "pedestrian_crossing": {"ego_speed": (10.0, 14.0), "ped_distance": (45.0, 65.0), "ped_speed": (1.2, 1.6),
                            "dart_speed": (2.5, 3.5), "env_obstacle_distance": (50.0, 90.0)},
    "following": {"ego_speed": (12.0, 16.0), "lead_speed": (11.0, 15.0), "lead_gap": (20.0, 35.0),
                  "obstacle_distance": (50.0, 70.0), "env_obstacle_distance": (60.0, 100.0)},
    "overtaking": {"ego_speed": (15.0, 18.0), "lead_speed": (7.0, 9.0), "lead_offset": (2.0, 10.0),
                   "oncoming_speed": (11.0, 14.0), "oncoming_clearance": (40.0, 80.0),
                   "env_obstacle_distance": (50.0, 90.0)},
    "left_turn_intersection": {"ego_speed": (8.0, 11.0), "approach_distance": (35.0, 50.0),
                               "oncoming_speed": (10.0, 13.0), "dart_speed": (2.5, 3.5),
                               "signal_green_time": (60.0, 60.0), "env_obstacle_distance": (15.0, 30.0)},
}


@dataclass(frozen=True)
class LogicalScenario:
    functional: FunctionalScenario
    ranges: tuple[tuple[str, tuple[float, float]], ...]
    environment: StaticCombination = field(default_factory=lambda: StaticCombination((), "default"))
    action: RiskAction | None = None

    def __post_init__(self):
        if isinstance(self.ranges, Mapping):
            object.__setattr__(self, "ranges", tuple(sorted(self.ranges.items())))
        for name, (lo, hi) in self.ranges:
            if not lo <= hi:
                raise ScenarioError(f"range {name!r} is empty: [{lo}, {hi}]")

    @property
    def id(self) -> str:
        action = self.action.action if self.action else "none"
        return f"{self.functional.id}|{self.environment.label}|{action}"

    def range_dict(self) -> dict[str, tuple[float, float]]:
        return dict(self.ranges)

    def environment_assignments(self) -> dict[str, str]:
        env = dict(self.functional.environment)
        env.update(self.environment.as_dict())
        return env

    def with_environment(self, combination: StaticCombination) -> "LogicalScenario":
        return replace(self, environment=combination)

    def with_action(self, action: RiskAction) -> "LogicalScenario":
        ranges = self.range_dict()
        if action.threshold_range is not None:
            ranges["trigger_threshold"] = action.threshold_range
        return replace(self, action=action, ranges=tuple(sorted(ranges.items())))

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "functional": self.functional.to_json(),
            "ranges": {k: list(v) for k, v in self.ranges},
            "environment": {"label": self.environment.label, "assignments": self.environment.as_dict()},
            "action": self.action.action if self.action else None,
        }

    @classmethod
    def from_json(cls, payload: dict, catalog: Sequence[RiskAction] = DEFAULT_ACTIONS) -> "LogicalScenario":
        action = payload.get("action")
        return cls(
            functional=FunctionalScenario.from_json(payload["functional"]),
            ranges={k: tuple(v) for k, v in payload["ranges"].items()},
            environment=StaticCombination.of(payload["environment"]["assignments"], payload["environment"]["label"]),
            action=action_by_name(action, catalog) if action else None,
        )


def to_logical(functional: FunctionalScenario, environment: StaticCombination | None = None,
               action: RiskAction | None = None, ranges: Mapping | None = None) -> LogicalScenario:
    """Lower a functional scenario to parameter ranges for its maneuver."""
    logical = LogicalScenario(functional, dict(ranges or DEFAULT_RANGES[functional.maneuver]))
    if environment is not None:
        logical = logical.with_environment(environment)
    if action is not None:
        logical = logical.with_action(action)
    return logical


@dataclass(frozen=True)
class ActorPlacement:
    id: str
    role: str
    kind: str
    x: float
    y: float
    heading: float
    speed: float
    length: float
    width: float
    behavior: tuple[tuple[str, object], ...] = ()

    def behavior_dict(self) -> dict:
        return dict(self.behavior)


@dataclass(frozen=True)
class EventSpec:
    actor: str
    action: str
    condition: str
    threshold: float
    reference: str = "ego"


@dataclass(frozen=True)
class ConcreteScenario:
    id: str
    functional_id: str
    maneuver: str
    road: str
    parameters: tuple[tuple[str, float], ...]
    actors: tuple[ActorPlacement, ...]
    events: tuple[EventSpec, ...]
    environment: tuple[tuple[str, str], ...]
    pattern: str = "default"

    def parameter_dict(self) -> dict[str, float]:
        return dict(self.parameters)

    def environment_dict(self) -> dict[str, str]:
        return dict(self.environment)

    def actor(self, actor_id: str) -> ActorPlacement:
        for a in self.actors:
            if a.id == actor_id:
                return a
        raise KeyError(actor_id)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "functional_id": self.functional_id,
            "maneuver": self.maneuver,
            "road": self.road,
            "pattern": self.pattern,
            "parameters": dict(self.parameters),
            "environment": dict(self.environment),
            "actors": [
                {
                    "id": a.id, "role": a.role, "kind": a.kind, "x": a.x, "y": a.y, "heading": a.heading,
                    "speed": a.speed, "length": a.length, "width": a.width, "behavior": dict(a.behavior),
                }
                for a in self.actors
            ],
            "events": [
                {"actor": e.actor, "action": e.action, "condition": e.condition, "threshold": e.threshold,
                 "reference": e.reference}
                for e in self.events
            ],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "ConcreteScenario":
        return cls(
            id=payload["id"],
            functional_id=payload["functional_id"],
            maneuver=payload["maneuver"],
            road=payload["road"],
            pattern=payload.get("pattern", "default"),
            parameters=tuple(sorted((k, float(v)) for k, v in payload["parameters"].items())),
            environment=tuple(sorted(payload["environment"].items())),
            actors=tuple(
                ActorPlacement(
                    a["id"], a["role"], a["kind"], float(a["x"]), float(a["y"]), float(a["heading"]),
                    float(a["speed"]), float(a["length"]), float(a["width"]), tuple(sorted(a["behavior"].items())),
                )
                for a in payload["actors"]
            ),
            events=tuple(EventSpec(**e) for e in payload["events"]),
        )


def footprints_overlap(a: ActorPlacement, b: ActorPlacement) -> bool:
    from .driving_sim import obb_overlap

    return obb_overlap((a.x, a.y, a.heading, a.length, a.width), (b.x, b.y, b.heading, b.length, b.width))


def _car(actor_id, role, x, y, heading, speed, **behavior) -> ActorPlacement:
    return ActorPlacement(actor_id, role, "car", x, y, heading, speed, *CAR, tuple(sorted(behavior.items())))


def _place(logical: LogicalScenario, p: dict[str, float]) -> tuple[list[ActorPlacement], list[EventSpec]]:
    f = logical.functional
    action = logical.action.action if logical.action else "none"
    env = logical.environment_assignments()
    actors: list[ActorPlacement] = []
    events: list[EventSpec] = []
    wanted = set(f.required_roles())
    if logical.action is not None and logical.action.action != "none":
        wanted.update(r for r in logical.action.requires if f.has_role(r))
    half = CAR[0] / 2

    if f.maneuver == "left_turn_intersection":
        ego_x = INTERSECTION["turn_start_x"] - p["approach_distance"]
        actors.append(_car("ego", "ego", ego_x, 0.0, 0.0, p["ego_speed"], set_speed=p["ego_speed"]))
        stop_x = INTERSECTION["oncoming_stop_line_x"] + half
        actors.append(_car("oncoming_vehicle", "oncoming_vehicle", stop_x, LANE_WIDTH, math.pi, 0.0,
                           mode="wait", cruise_speed=p["oncoming_speed"]))
        if "pedestrian" in wanted:
            actors.append(ActorPlacement("pedestrian", "pedestrian", "pedestrian", INTERSECTION["exit_x"] + 2.6,
                                         INTERSECTION["crosswalk_y"], math.pi, 0.0, *PEDESTRIAN,
                                         (("mode", "wait"), ("walk_speed", p["dart_speed"]))))
        route_start = ego_x
    elif f.maneuver == "overtaking":
        actors.append(_car("ego", "ego", 0.0, LANE_WIDTH, 0.0, p["ego_speed"], set_speed=p["ego_speed"]))
        lead_x = p["lead_offset"]
        actors.append(_car("lead_vehicle", "lead_vehicle", lead_x, 0.0, 0.0, p["lead_speed"],
                           mode="cruise", cruise_speed=p["lead_speed"], lane_y=0.0))
        t_pass = (lead_x + CAR[0] + 12.0) / (p["ego_speed"] - p["lead_speed"])
        merge_x = p["ego_speed"] * t_pass
        onc_x = merge_x + 30.0 + p["oncoming_speed"] * (t_pass + 30.0 / p["ego_speed"]) + p["oncoming_clearance"]
        actors.append(_car("oncoming_vehicle", "oncoming_vehicle", onc_x, LANE_WIDTH, math.pi, p["oncoming_speed"],
                           mode="cruise", cruise_speed=p["oncoming_speed"], lane_y=LANE_WIDTH))
        route_start = 0.0
    else:
        actors.append(_car("ego", "ego", 0.0, 0.0, 0.0, p["ego_speed"], set_speed=p["ego_speed"]))
        route_start = 0.0
        if "lead_vehicle" in wanted:
            lead_x = CAR[0] + p["lead_gap"]
            actors.append(_car("lead_vehicle", "lead_vehicle", lead_x, 0.0, 0.0, p["lead_speed"],
                               mode="cruise", cruise_speed=p["lead_speed"], lane_y=0.0))
            if action == "lane_change":
                ob = FOOTPRINTS["debris"]
                actors.append(ActorPlacement("obstacle", "obstacle", "debris", lead_x + half + p["obstacle_distance"],
                                             0.0, 0.0, 0.0, *ob))
        if "pedestrian" in wanted:
            if f.maneuver == "pedestrian_crossing" and action != "pedestrian_dart":
                actors.append(ActorPlacement("pedestrian", "pedestrian", "pedestrian", p["ped_distance"],
                                             LANE_WIDTH * 1.5 + 0.35, -math.pi / 2, 0.0, *PEDESTRIAN,
                                             (("mode", "walk"), ("walk_speed", p["ped_speed"]))))
            else:
                actors.append(ActorPlacement("pedestrian", "pedestrian", "pedestrian", p["ped_distance"],
                                             -LANE_WIDTH / 2 - 0.85, math.pi / 2, 0.0, *PEDESTRIAN,
                                             (("mode", "wait"), ("walk_speed", p["dart_speed"]))))

    obstacle_kind = env.get("obstacle", "none")
    if obstacle_kind != "none":
        length, width = FOOTPRINTS[obstacle_kind]
        # parked at the right lane edge, leaving a small clearance to a centred ego
        y = -LANE_WIDTH / 2 - width / 2 + (0.2 if obstacle_kind == "static_object" else 0.6)
        actors.append(ActorPlacement("env_obstacle", "obstacle", obstacle_kind,
                                     route_start + p["env_obstacle_distance"], y, 0.0, 0.0, length, width))

    if logical.action is not None and logical.action.trigger is not None:
        trig = logical.action.trigger
        threshold = p.get("trigger_threshold", trig.threshold)
        events.append(EventSpec(logical.action.actor, logical.action.action, trig.condition, threshold, trig.reference))
    return actors, events


def concretize(logical: LogicalScenario, n: int, seed: int = 0, max_attempts: int = 100) -> list[ConcreteScenario]:
    """Draw ``n`` concrete instances with parameters uniform on the logical ranges."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    names = [name for name, _ in logical.ranges]
    bounds = np.array([r for _, r in logical.ranges], dtype=float).reshape(-1, 2)
    out = []
    for k in range(n):
        for _ in range(max_attempts):
            values = rng.uniform(bounds[:, 0], bounds[:, 1]) if len(names) else np.zeros(0)
            params = {name: float(v) for name, v in zip(names, values)}
            actors, events = _place(logical, params)
            clash = any(footprints_overlap(a, b) for i, a in enumerate(actors) for b in actors[i + 1 :])
            if not clash:
                break
        else:
            raise ScenarioError(f"ranges of {logical.id!r} force overlapping initial placements")
        out.append(
            ConcreteScenario(
                id=f"{logical.id}#{seed}.{k}",
                functional_id=logical.functional.id,
                maneuver=logical.functional.maneuver,
                road=logical.functional.road,
                parameters=tuple(sorted(params.items())),
                actors=tuple(actors),
                events=tuple(events),
                environment=tuple(sorted(logical.environment_assignments().items())),
                pattern=logical.environment.label,
            )
        )
    return out
