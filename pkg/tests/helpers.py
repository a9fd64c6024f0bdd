"""Small builders for hand-made data sets, scenarios and simulation logs."""

import numpy as np

from scenegen.accident_data import Dataset
from scenegen.driving_sim import Route, SimLog, VehicleState
from scenegen.scenario import CAR, ActorPlacement, ConcreteScenario
from scenegen.schema import VariableSchema

XY_SCHEMA = VariableSchema((("X", ("0", "1")), ("Y", ("0", "1"))))


def counts_dataset(table) -> Dataset:
    """Records reproducing a 2x2 contingency table of ``X`` by ``Y``."""
    rows = []
    for x, row in enumerate(table):
        for y, count in enumerate(row):
            rows.extend([(x, y)] * count)
    return Dataset(XY_SCHEMA, np.asarray(rows, dtype=np.int64))


def ego_placement(x=0.0, y=0.0, speed=10.0, set_speed=None) -> ActorPlacement:
    behavior = (("set_speed", speed if set_speed is None else set_speed),)
    return ActorPlacement("ego", "ego", "car", x, y, 0.0, speed, *CAR, behavior)


def lone_ego_scenario(speed=10.0, set_speed=None, environment=(), extra=()) -> ConcreteScenario:
    actors = (ego_placement(speed=speed, set_speed=set_speed), *extra)
    return ConcreteScenario("fixture", "fixture", "lane_keeping", "straight_two_lane",
                            (("ego_speed", speed),), actors, (), tuple(environment))


def make_log(ego_states, others=None, dt=0.05, controls=None, events=(), boundaries=()) -> SimLog:
    others = others or {}
    n = len(ego_states)
    ids = ("ego", *others)
    states = {"ego": list(ego_states), **{k: list(v) for k, v in others.items()}}
    return SimLog(
        scenario_id="hand",
        dt=dt,
        times=[k * dt for k in range(n)],
        actor_ids=ids,
        roles={i: ("ego" if i == "ego" else "other") for i in ids},
        states=states,
        controls=list(controls) if controls is not None else [(0.0, 0.0, 0.0)] * n,
        events=list(events),
        route=Route([("line", 0.0, 0.0, 10_000.0, 0.0)]),
        lane_boundaries=list(boundaries),
    )


def constant_speed_log(speed=10.0, seconds=10.0, dt=0.05) -> SimLog:
    n = int(round(seconds / dt)) + 1
    return make_log([VehicleState(speed * k * dt, 0.0, 0.0, speed) for k in range(n)], dt=dt)


def square_wave_steer(n: int, per_half: int, amplitude=0.1) -> list[float]:
    """``n`` samples flipping sign every ``per_half`` samples."""
    return [amplitude if (k // per_half) % 2 == 0 else -amplitude for k in range(n)]


def steering_square_wave_log(seconds=60.0, dt=0.05, speed=10.0, half_period=0.5) -> SimLog:
    """Steering alternating between +0.1 and -0.1 rad every 0.5 s for 60 s."""
    n = int(round(seconds / dt)) + 1
    steer = square_wave_steer(n, int(round(half_period / dt)))
    states = [VehicleState(speed * k * dt, 0.0, 0.0, speed, steer=steer[k]) for k in range(n)]
    return make_log(states, dt=dt)


def ttc_pair(gap: float, ego_speed: float, other_speed: float):
    """Two cars in line on the x axis with a bumper-to-bumper ``gap``."""
    ego = VehicleState(0.0, 0.0, 0.0, ego_speed)
    other = VehicleState(gap + CAR[0], 0.0, 0.0, other_speed)
    return ego, other
