import json

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from scenegen.scenario import (
    DEFAULT_ACTIONS,
    DEFAULT_PATTERNS,
    DEFAULT_RANGES,
    ActorRole,
    ConcreteScenario,
    FunctionalScenario,
    LogicalScenario,
    RiskAction,
    ScenarioError,
    StaticCombination,
    Trigger,
    action_by_name,
    concretize,
    default_seeds,
    footprints_overlap,
    parse_scenario,
    precond,
    to_logical,
)
from scenegen.schema import SchemaError

SEEDS = {s.id: s for s in default_seeds()}


def _write(tmp_path, payload):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(payload))
    return path


def test_following_fixture_parses(tmp_path):
    payload = {"id": "f", "maneuver": "following", "road": "straight_two_lane",
               "actors": [{"role": "ego"}, {"role": "lead_vehicle"}]}
    scenario = parse_scenario(_write(tmp_path, payload))
    assert scenario.has_role("ego") and scenario.has_role("lead_vehicle")
    assert SEEDS["following"].required_roles() == ("ego", "lead_vehicle")


def test_two_egos_rejected(tmp_path):
    payload = {"id": "f", "maneuver": "following", "road": "straight_two_lane",
               "actors": [{"role": "ego"}, {"role": "ego"}, {"role": "lead_vehicle"}]}
    with pytest.raises(ScenarioError, match="exactly one ego"):
        parse_scenario(_write(tmp_path, payload))


def test_left_turn_needs_an_intersection(tmp_path):
    payload = {"id": "t", "maneuver": "left_turn_intersection", "road": "straight_two_lane",
               "actors": [{"role": "ego"}, {"role": "oncoming_vehicle"}]}
    with pytest.raises(ScenarioError, match="incompatible"):
        parse_scenario(_write(tmp_path, payload))


@pytest.mark.parametrize("payload, match", [
    ({"id": "x", "maneuver": "following", "actors": [{"role": "ego"}]}, "road"),
    ({"id": "x", "maneuver": "drifting", "road": "straight_two_lane", "actors": [{"role": "ego"}]}, "maneuver"),
    ({"id": "x", "maneuver": "following", "road": "straight_two_lane", "actors": [{"role": "ego"}]}, "lead_vehicle"),
    ({"id": "x", "maneuver": "lane_keeping", "road": "straight_two_lane", "actors": [{"role": "ego"}, {"role": "cow"}]},
     "role"),
])
def test_malformed_scenarios(tmp_path, payload, match):
    with pytest.raises(ScenarioError, match=match):
        parse_scenario(_write(tmp_path, payload))


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ScenarioError):
        parse_scenario(path)


def test_environment_states_are_checked():
    with pytest.raises(SchemaError):
        FunctionalScenario("x", "lane_keeping", (ActorRole("ego"),), "straight_two_lane", {"weather": "hail"})


def test_pedestrian_dart_needs_a_pedestrian():
    assert not precond(SEEDS["following"], action_by_name("pedestrian_dart"))
    assert precond(SEEDS["pedestrian_crossing"], action_by_name("pedestrian_dart"))


@pytest.mark.parametrize("seed", sorted(SEEDS))
def test_heavy_rain_applies_everywhere(seed):
    assert precond(SEEDS[seed], DEFAULT_PATTERNS[0])


def test_sudden_brake_on_following():
    assert precond(SEEDS["following"], action_by_name("sudden_brake"))


# contract table: roles and road needed by each default pattern and action
PATTERN_TABLE = {
    "Heavy Rain + Flooded Road": set(SEEDS),
    "Night without Streetlights": set(SEEDS),
    "Dense Fog + Construction Area": {"lane_keeping", "following"},
    "Strong Wind + Loose Dry Surface": set(SEEDS),
    "Setting Sun + Slippery Roads": set(SEEDS),
    "Sunset + Worn Road Markings": set(SEEDS),
}
ACTION_TABLE = {
    "sudden_brake": {"following", "overtaking"},
    "lane_change": {"following"},
    "pedestrian_dart": {"lane_keeping", "pedestrian_crossing", "left_turn"},
    "run_red_light": {"left_turn"},
    "none": set(SEEDS),
}


@pytest.mark.parametrize("pattern", DEFAULT_PATTERNS, ids=lambda p: p.label)
def test_pattern_contract_table(pattern):
    assert {s for s in SEEDS if precond(SEEDS[s], pattern)} == PATTERN_TABLE[pattern.label]


@pytest.mark.parametrize("action", DEFAULT_ACTIONS, ids=lambda a: a.action)
def test_action_contract_table(action):
    assert {s for s in SEEDS if precond(SEEDS[s], action)} == ACTION_TABLE[action.action]


def test_conflicting_environment_fails_precondition():
    rainy = to_logical(SEEDS["following"], environment=StaticCombination.of({"weather": "rain"}, "rain"))
    assert not precond(rainy, StaticCombination.of({"weather": "fog"}, "fog"))
    assert precond(rainy, StaticCombination.of({"weather": "rain", "lighting": "dark_lit"}, "rain at night"))


def test_second_risky_action_is_refused():
    braking = to_logical(SEEDS["following"], action=action_by_name("sudden_brake"))
    assert not precond(braking, action_by_name("lane_change"))
    assert precond(braking, action_by_name("sudden_brake"))


def test_catalog_validation():
    with pytest.raises(ScenarioError):
        Trigger("sunrise", 1.0)
    with pytest.raises(ScenarioError):
        Trigger("time_elapsed", 0.0)
    with pytest.raises(ScenarioError):
        RiskAction("ego", "none", Trigger("time_elapsed", 1.0))
    with pytest.raises(ScenarioError):
        RiskAction("lead_vehicle", "sudden_brake", None)
    with pytest.raises(KeyError):
        action_by_name("moonwalk")


def test_degenerate_ranges_give_identical_instances():
    ranges = {k: (lo, lo) for k, (lo, hi) in DEFAULT_RANGES["following"].items()}
    logical = to_logical(SEEDS["following"], ranges=ranges)
    out = concretize(logical, 4, seed=0)
    assert len(out) == 4
    body = [{k: v for k, v in c.to_json().items() if k != "id"} for c in out]
    assert all(b == body[0] for b in body)
    assert len({c.id for c in out}) == 4


def test_concretize_is_reproducible():
    logical = to_logical(SEEDS["overtaking"], action=action_by_name("sudden_brake"))
    assert concretize(logical, 5, seed=3) == concretize(logical, 5, seed=3)
    assert concretize(logical, 5, seed=3) != concretize(logical, 5, seed=4)


def test_gap_samples_are_uniform():
    ranges = dict(DEFAULT_RANGES["following"])
    ranges["lead_gap"] = (10.0, 30.0)
    logical = to_logical(SEEDS["following"], ranges=ranges)
    gaps = [c.parameter_dict()["lead_gap"] for c in concretize(logical, 1000, seed=12)]
    assert stats.kstest(gaps, stats.uniform(loc=10.0, scale=20.0).cdf).pvalue > 0.01


def test_concretize_rejects_nonpositive_n():
    with pytest.raises(ValueError):
        concretize(to_logical(SEEDS["following"]), 0)


def _all_logicals():
    out = []
    for seed in SEEDS.values():
        for pattern in DEFAULT_PATTERNS:
            if not precond(seed, pattern):
                continue
            for action in DEFAULT_ACTIONS:
                logical = to_logical(seed, environment=pattern)
                if precond(logical, action):
                    out.append(logical.with_action(action))
    return out


LOGICALS = _all_logicals()


@given(st.sampled_from(LOGICALS), st.integers(0, 10_000))
def test_concrete_instances_are_well_formed(logical, seed):
    concrete = concretize(logical, 1, seed=seed)[0]
    ranges = logical.range_dict()
    for name, value in concrete.parameter_dict().items():
        lo, hi = ranges[name]
        assert lo <= value <= hi
    actors = concrete.actors
    assert sum(a.role == "ego" for a in actors) == 1
    assert not any(footprints_overlap(a, b) for i, a in enumerate(actors) for b in actors[i + 1:])
    roles = {a.role for a in actors}
    assert set(logical.functional.required_roles()) <= roles
    for event in concrete.events:
        assert event.actor in {a.id for a in actors}
    assert concrete.environment_dict() == logical.environment_assignments()


@given(st.sampled_from(LOGICALS), st.integers(0, 10_000))
def test_json_round_trips(logical, seed):
    assert LogicalScenario.from_json(json.loads(json.dumps(logical.to_json()))) == logical
    concrete = concretize(logical, 1, seed=seed)[0]
    assert ConcreteScenario.from_json(json.loads(json.dumps(concrete.to_json()))) == concrete


def test_with_action_adds_trigger_range():
    logical = to_logical(SEEDS["following"]).with_action(action_by_name("sudden_brake"))
    assert logical.range_dict()["trigger_threshold"] == (3.0, 6.0)
    assert logical.id == "following|default|sudden_brake"
