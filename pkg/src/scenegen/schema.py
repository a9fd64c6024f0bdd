"""Categorical variable schema shared by the data, network and scenario layers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence


class SchemaError(ValueError):
    """Raised for malformed schemas or assignments that do not fit a schema."""


@dataclass(frozen=True)
class VariableSchema:
    """Ordered categorical variables, each with an ordered tuple of state labels."""

    variables: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        variables = tuple((str(name), tuple(str(s) for s in states)) for name, states in self.variables)
        object.__setattr__(self, "variables", variables)
        seen = set()
        for name, states in variables:
            if name in seen:
                raise SchemaError(f"duplicate variable name {name!r}")
            seen.add(name)
            if len(states) < 2:
                raise SchemaError(f"variable {name!r} needs at least 2 states")
            if len(set(states)) != len(states):
                raise SchemaError(f"variable {name!r} has duplicate state labels")
        object.__setattr__(self, "_index", {name: i for i, (name, _) in enumerate(variables)})
        object.__setattr__(
            self, "_state_index", {name: {s: k for k, s in enumerate(states)} for name, states in variables}
        )

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Sequence[str]]) -> "VariableSchema":
        return cls(tuple((name, tuple(states)) for name, states in mapping.items()))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.variables)

    @property
    def arities(self) -> tuple[int, ...]:
        return tuple(len(states) for _, states in self.variables)

    def __contains__(self, name) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self.variables)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"unknown variable {name!r}") from None

    def states(self, name: str) -> tuple[str, ...]:
        return self.variables[self.index(name)][1]

    def arity(self, name: str) -> int:
        return len(self.states(name))

    def state_index(self, name: str, label: str) -> int:
        self.index(name)
        try:
            return self._state_index[name][label]
        except KeyError:
            raise SchemaError(f"unknown state {label!r} for variable {name!r}") from None

    def encode(self, assignment: Mapping[str, str | int]) -> dict[str, int]:
        """Convert a label (or index) assignment to state indices, validating it."""
        out = {}
        for name, value in assignment.items():
            if isinstance(value, str):
                out[name] = self.state_index(name, value)
            else:
                k = int(value)
                if not 0 <= k < self.arity(name):
                    raise SchemaError(f"state index {k} out of range for {name!r}")
                out[name] = k
        return out

    def decode(self, assignment: Mapping[str, int]) -> dict[str, str]:
        return {name: self.states(name)[int(k)] for name, k in assignment.items()}

    def subset(self, names: Iterable[str]) -> "VariableSchema":
        """Sub-schema keeping this schema's ordering."""
        wanted = set(names)
        for name in wanted:
            self.index(name)
        return VariableSchema(tuple(v for v in self.variables if v[0] in wanted))

    def to_json(self) -> list:
        return [{"name": name, "states": list(states)} for name, states in self.variables]

    @classmethod
    def from_json(cls, payload) -> "VariableSchema":
        return cls(tuple((item["name"], tuple(item["states"])) for item in payload))


STATIC_FACTORS = ("weather", "lighting", "surface_condition", "road_damage", "obstacle")

CANONICAL_SCHEMA = VariableSchema.from_mapping(
    {
        "weather": ["clear", "rain", "fog", "snow", "wind"],
        "lighting": ["daylight", "dusk_dawn", "dark_lit", "dark_unlit"],
        "surface_condition": ["dry", "wet", "flooded", "icy", "debris"],
        "road_damage": ["none", "worn_markings", "potholes", "construction"],
        "obstacle": ["none", "static_object", "construction_zone"],
        "junction": ["none", "intersection"],
        "actor_action": ["none", "sudden_brake", "lane_change", "pedestrian_dart", "run_red_light"],
        "severity": ["property", "injury", "fatal"],
    }
)

SEVERITY_VALUES = {"property": 1.0, "injury": 2.0, "fatal": 3.0}
