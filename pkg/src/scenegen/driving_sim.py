"""Deterministic fixed-timestep 2D kinematic simulator.

Vehicles follow a kinematic bicycle model integrated with semi-implicit Euler.
The ego is driven by a rule-based, visibility-limited policy (car following
with time headway, TTC-triggered hard braking, pure-pursuit steering); other
actors run simple scripted behaviours that risky-action triggers switch.
All arithmetic is plain Python floats so repeated runs are bit-identical.
"""

from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .scenario import CAR, INTERSECTION, LANE_WIDTH, ConcreteScenario, ScenarioError
from .schema import CANONICAL_SCHEMA, STATIC_FACTORS

# ---------------------------------------------------------------- configuration


@dataclass
class EgoParams:
    headway_time: float = 1.8
    min_gap: float = 2.0
    ttc_hard_brake: float = 1.5
    caution_horizon: float = 4.0
    lookahead_min: float = 4.0
    lookahead_gain: float = 0.6
    speed_gain: float = 0.5
    lateral_accel_comfort: float = 2.5
    decel_comfort: float = 2.0
    path_margin: float = 0.3
    # the policy plans with nominal (dry-road) braking; it cannot sense friction
    assumed_decel: float = 7.2


@dataclass
class SimConfig:
    dt: float = 0.05
    duration: float = 20.0
    wheelbase: float = 2.8
    a_max: float = 3.0
    b_max: float = 8.0
    v_max: float = 40.0
    pedestrian_accel: float = 3.0
    friction: dict = field(default_factory=lambda: {"dry": 0.9, "wet": 0.6, "flooded": 0.4, "icy": 0.2, "debris": 0.7})
    weather_visibility: dict = field(
        default_factory=lambda: {"clear": 150.0, "rain": 50.0, "fog": 30.0, "snow": 40.0, "wind": 120.0}
    )
    lighting_visibility: dict = field(
        default_factory=lambda: {"daylight": 150.0, "dusk_dawn": 80.0, "dark_lit": 60.0, "dark_unlit": 20.0}
    )
    crosswind: float = 1.5
    route_length: float = 250.0
    ego: EgoParams = field(default_factory=EgoParams)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, payload: dict) -> "SimConfig":
        payload = dict(payload)
        ego = EgoParams(**payload.pop("ego", {}))
        return cls(ego=ego, **payload)


# ---------------------------------------------------------------- state types


@dataclass(frozen=True, slots=True)
class VehicleState:
    x: float
    y: float
    heading: float
    speed: float
    accel: float = 0.0
    steer: float = 0.0
    length: float = CAR[0]
    width: float = CAR[1]

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        if abs(self.steer) > 0.6 + 1e-12:
            raise ValueError("steering angle exceeds 0.6 rad")
        if self.length <= 0 or self.width <= 0:
            raise ValueError("footprint must be positive")


@dataclass(frozen=True)
class EnvironmentEffects:
    friction: float
    visibility: float
    crosswind: float = 0.0

    def __post_init__(self):
        if not 0 < self.friction <= 1:
            raise ValueError("friction must lie in (0, 1]")
        if not 0 < self.visibility < math.inf:
            raise ValueError("visibility must be positive and finite")


def effects_from_environment(env: dict, config: SimConfig) -> EnvironmentEffects:
    """Map static-factor assignments to physical effects; unset factors take benign defaults."""
    for key, value in env.items():
        if key not in STATIC_FACTORS:
            raise ScenarioError(f"unknown environment factor {key!r}")
        if value not in CANONICAL_SCHEMA.states(key):
            raise ScenarioError(f"unknown state {value!r} for {key!r}")
    weather = env.get("weather", "clear")
    lighting = env.get("lighting", "daylight")
    surface = env.get("surface_condition", "dry")
    visibility = min(config.weather_visibility[weather], config.lighting_visibility[lighting])
    wind = config.crosswind if weather == "wind" else 0.0
    return EnvironmentEffects(config.friction[surface], visibility, wind)


@dataclass(frozen=True)
class SimEvent:
    t: float
    kind: str
    actors: tuple[str, ...]
    detail: str = ""


# ---------------------------------------------------------------- geometry


def _wrap(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def obb_overlap(a, b) -> bool:
    """Separating-axis test for two oriented boxes ``(x, y, heading, length, width)``.

    Touching boxes count as overlapping.
    """
    ax, ay, ah, al, aw = a
    bx, by, bh, bl, bw = b
    dx, dy = bx - ax, by - ay
    if dx * dx + dy * dy > 0.25 * ((al * al + aw * aw) ** 0.5 + (bl * bl + bw * bw) ** 0.5) ** 2 + 1e-9:
        return False
    ca, sa, cb, sb = math.cos(ah), math.sin(ah), math.cos(bh), math.sin(bh)
    tol = 1e-9
    for ux, uy in ((ca, sa), (-sa, ca), (cb, sb), (-sb, cb)):
        ra = 0.5 * al * abs(ca * ux + sa * uy) + 0.5 * aw * abs(-sa * ux + ca * uy)
        rb = 0.5 * bl * abs(cb * ux + sb * uy) + 0.5 * bw * abs(-sb * ux + cb * uy)
        if abs(dx * ux + dy * uy) > ra + rb + tol:
            return False
    return True


def _box(s: VehicleState):
    return (s.x, s.y, s.heading, s.length, s.width)


def detect_collision(actors: dict[str, VehicleState]) -> list[tuple[str, str]]:
    """All overlapping actor pairs, in actor insertion order."""
    ids = list(actors)
    hits = []
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            if obb_overlap(_box(actors[a]), _box(actors[b])):
                hits.append((a, b))
    return hits


def projected_extents(s: VehicleState, heading: float) -> tuple[float, float]:
    """Half extents of a footprint along and across ``heading``."""
    d = s.heading - heading
    c, n = abs(math.cos(d)), abs(math.sin(d))
    return 0.5 * s.length * c + 0.5 * s.width * n, 0.5 * s.length * n + 0.5 * s.width * c


class Route:
    """Piecewise path of line segments ``("line", x0, y0, x1, y1)`` and arcs ``("arc", cx, cy, r, a0, a1)``.

    Arcs run counter-clockwise from angle ``a0`` to ``a1``. Lateral offsets are
    positive to the left of the travel direction.
    """

    def __init__(self, segments: Sequence[tuple]):
        self.segments = [tuple(s) for s in segments]
        self._starts = []
        total = 0.0
        for seg in self.segments:
            self._starts.append(total)
            total += self._length(seg)
        self.length = total

    @staticmethod
    def _length(seg) -> float:
        if seg[0] == "line":
            return math.hypot(seg[3] - seg[1], seg[4] - seg[2])
        return seg[3] * (seg[5] - seg[4])

    def to_json(self) -> list:
        return [list(s) for s in self.segments]

    @classmethod
    def from_json(cls, payload) -> "Route":
        return cls([tuple(s) for s in payload])

    def translated(self, dx: float, dy: float) -> "Route":
        out = []
        for seg in self.segments:
            if seg[0] == "line":
                out.append(("line", seg[1] + dx, seg[2] + dy, seg[3] + dx, seg[4] + dy))
            else:
                out.append(("arc", seg[1] + dx, seg[2] + dy, seg[3], seg[4], seg[5]))
        return Route(out)

    def project(self, x: float, y: float) -> tuple[float, float]:
        """Arc length and signed lateral offset of the closest route point."""
        best = None
        last = len(self.segments) - 1
        for i, seg in enumerate(self.segments):
            start = self._starts[i]
            if seg[0] == "line":
                _, x0, y0, x1, y1 = seg
                L = math.hypot(x1 - x0, y1 - y0)
                ux, uy = (x1 - x0) / L, (y1 - y0) / L
                t = (x - x0) * ux + (y - y0) * uy
                lat = -(x - x0) * uy + (y - y0) * ux
                # the first and last lines extend indefinitely
                tc = t
                if t < 0 and i > 0:
                    tc = 0.0
                elif t > L and i < last:
                    tc = L
                dist = math.hypot(t - tc, lat)
                cand = (dist, start + tc, lat)
            else:
                _, cx, cy, r, a0, a1 = seg
                ang = math.atan2(y - cy, x - cx)
                rel = (ang - a0) % (2 * math.pi)
                span = a1 - a0
                if rel > span:
                    rel = span if rel - span < 2 * math.pi - rel else 0.0
                px, py = cx + r * math.cos(a0 + rel), cy + r * math.sin(a0 + rel)
                rho = math.hypot(x - cx, y - cy)
                dist = math.hypot(x - px, y - py)
                cand = (dist, start + r * rel, r - rho)
            if best is None or cand[0] < best[0] - 1e-12:
                best = cand
        return best[1], best[2]

    def _locate(self, s: float) -> int:
        i = 0
        for k, start in enumerate(self._starts):
            if s >= start:
                i = k
        return i

    def point_at(self, s: float) -> tuple[float, float, float]:
        i = self._locate(s)
        seg = self.segments[i]
        u = s - self._starts[i]
        if seg[0] == "line":
            _, x0, y0, x1, y1 = seg
            L = math.hypot(x1 - x0, y1 - y0)
            ux, uy = (x1 - x0) / L, (y1 - y0) / L
            return x0 + ux * u, y0 + uy * u, math.atan2(uy, ux)
        _, cx, cy, r, a0, a1 = seg
        a = a0 + min(max(u, 0.0), r * (a1 - a0)) / r
        return cx + r * math.cos(a), cy + r * math.sin(a), a + math.pi / 2

    def straight_heading(self, s: float, ahead: float) -> float | None:
        """Heading if the route is one straight line over ``[s, s + ahead]``."""
        i = self._locate(s)
        seg = self.segments[i]
        if seg[0] != "line":
            return None
        end = self._starts[i] + self._length(seg)
        if s + ahead > end and i < len(self.segments) - 1:
            return None
        return math.atan2(seg[4] - seg[2], seg[3] - seg[1])

    def curve_speed_limit(self, s: float, lat_accel: float, decel: float) -> float:
        """Highest speed from which every arc ahead can be entered at comfortable lateral acceleration."""
        limit = math.inf
        for i, seg in enumerate(self.segments):
            if seg[0] != "arc":
                continue
            end = self._starts[i] + self._length(seg)
            if end < s:
                continue
            d = max(0.0, self._starts[i] - s)
            limit = min(limit, math.sqrt(lat_accel * seg[3] + 2.0 * decel * d))
        return limit


def _signed_side(x0, y0, x1, y1, x, y) -> float | None:
    dx, dy = x1 - x0, y1 - y0
    L2 = dx * dx + dy * dy
    t = ((x - x0) * dx + (y - y0) * dy) / L2
    if t < 0 or t > 1:
        return None
    return (-(x - x0) * dy + (y - y0) * dx) / math.sqrt(L2)


# ---------------------------------------------------------------- ego policy


def _route_gap(route: Route, ego: VehicleState, s_ego: float, other: VehicleState, params: EgoParams):
    """Bumper gap and along-route speed of ``other`` if it lies in the ego corridor ahead."""
    s_o, lat_o = route.project(other.x, other.y)
    _, _, h = route.point_at(s_o)
    ext_x, ext_y = projected_extents(other, h)
    if s_o <= s_ego or abs(lat_o) > 0.5 * ego.width + ext_y + params.path_margin:
        return None
    gap = s_o - s_ego - 0.5 * ego.length - ext_x
    return max(gap, 0.0), other.speed * math.cos(other.heading - h)


def _slab(d: float, w: float, h: float, horizon: float):
    if w == 0.0:
        return (0.0, horizon) if abs(d) <= h else None
    t1, t2 = (-h - d) / w, (h - d) / w
    if t1 > t2:
        t1, t2 = t2, t1
    lo, hi = max(t1, 0.0), min(t2, horizon)
    return (lo, hi) if lo <= hi else None


def conflict_time(route: Route, ego: VehicleState, s_ego: float, lat_ego: float, other: VehicleState,
                  horizon: float, margin: float = 0.2) -> float | None:
    """Earliest predicted overlap assuming the ego keeps its speed along the route and ``other`` its velocity."""
    heading = route.straight_heading(s_ego, ego.speed * horizon + 10.0)
    if heading is not None:
        c, sn = math.cos(heading), math.sin(heading)
        rx, ry = other.x - ego.x, other.y - ego.y
        dx, dy = rx * c + ry * sn, -rx * sn + ry * c
        wx = other.speed * math.cos(other.heading - heading) - ego.speed
        wy = other.speed * math.sin(other.heading - heading)
        ext_x, ext_y = projected_extents(other, heading)
        a = _slab(dx, wx, 0.5 * ego.length + ext_x, horizon)
        b = _slab(dy, wy, 0.5 * ego.width + ext_y + margin, horizon)
        if a is None or b is None:
            return None
        lo, hi = max(a[0], b[0]), min(a[1], b[1])
        return lo if lo <= hi else None
    steps = 8
    for k in range(steps + 1):
        t = horizon * k / steps
        ox = other.x + other.speed * math.cos(other.heading) * t
        oy = other.y + other.speed * math.sin(other.heading) * t
        ex, ey, eh = route.point_at(s_ego + ego.speed * t)
        ex -= lat_ego * math.sin(eh)
        ey += lat_ego * math.cos(eh)
        if obb_overlap((ex, ey, eh, ego.length, ego.width + 2 * margin), (ox, oy, other.heading, other.length, other.width)):
            return t
    return None


def ego_control(perceived: Iterable[VehicleState], ego: VehicleState, route: Route, params: EgoParams,
                set_speed: float, wheelbase: float = 2.8) -> tuple[float, float, float]:
    """Throttle, brake and steering command for the ego from what it can see."""
    s, lat = route.project(ego.x, ego.y)
    v = ego.speed

    lookahead = max(params.lookahead_min, params.lookahead_gain * v)
    tx, ty, _ = route.point_at(s + lookahead)
    alpha = _wrap(math.atan2(ty - ego.y, tx - ego.x) - ego.heading)
    steer = math.atan2(2.0 * wheelbase * math.sin(alpha), lookahead)
    steer = max(-0.6, min(0.6, steer))

    target = min(set_speed, route.curve_speed_limit(s, params.lateral_accel_comfort, params.decel_comfort))
    throttle = brake = 0.0
    err = target - v
    if err >= 0:
        throttle = min(1.0, params.speed_gain * err)
    else:
        brake = min(1.0, -0.25 * err)

    desired = max(params.min_gap, params.headway_time * v)
    b_nominal = params.assumed_decel
    following = False
    for other in perceived:
        lead = _route_gap(route, ego, s, other, params)
        if lead is not None:
            gap, v_lead = lead
            closing = v - v_lead
            if gap < desired and closing > -0.5:
                following = True
                brake = max(brake, min(1.0, 0.5 * (desired - gap) / desired))
            if closing > 0:
                if gap <= 0.0:
                    brake = 1.0
                else:
                    if closing / gap * 1.0 > 1.0 / params.ttc_hard_brake:
                        brake = 1.0
                    # deceleration needed to match the lead's speed before the minimum gap
                    room = max(gap - params.min_gap, 0.1)
                    need = closing * closing / (2.0 * room)
                    if need > 0.75 * params.decel_comfort:
                        following = True
                        brake = max(brake, min(1.0, need / b_nominal))
            if gap < 1.5 * desired and v_lead < target:
                following = True
        if other.speed > 0.3:
            t = conflict_time(route, ego, s, lat, other, params.caution_horizon)
            if t is not None:
                following = True
                if t < params.ttc_hard_brake:
                    brake = 1.0
                else:
                    ramp = (params.caution_horizon - t) / (params.caution_horizon - params.ttc_hard_brake)
                    brake = max(brake, 0.6 * ramp)
    if following or brake > 0:
        throttle = 0.0 if brake > 0 else min(throttle, 0.2)
    return throttle, brake, steer


# ---------------------------------------------------------------- world


@dataclass
class Actor:
    id: str
    role: str
    kind: str
    x: float
    y: float
    heading: float
    speed: float
    length: float
    width: float
    behavior: dict
    accel: float = 0.0
    steer: float = 0.0

    @property
    def is_vehicle(self) -> bool:
        return self.kind == "car"

    @property
    def is_static(self) -> bool:
        return self.kind not in ("car", "pedestrian")

    def state(self) -> VehicleState:
        return VehicleState(self.x, self.y, self.heading, self.speed, self.accel, self.steer, self.length, self.width)


@dataclass
class Signal:
    stop_line_x: float
    green_time: float

    def is_red(self, t: float) -> bool:
        return t >= self.green_time


@dataclass
class World:
    scenario_id: str
    config: SimConfig
    effects: EnvironmentEffects
    route: Route
    lane_boundaries: list
    actors: list
    events: list
    signal: Signal | None
    zone_center: tuple[float, float]
    step_index: int = 0
    terminated: bool = False
    fired: set = field(default_factory=set)
    collided_pairs: set = field(default_factory=set)
    violation_logged: bool = False
    log_events: list = field(default_factory=list)
    last_control: tuple = (0.0, 0.0, 0.0)

    @property
    def clock(self) -> float:
        return self.step_index * self.config.dt

    def actor(self, actor_id: str) -> Actor:
        for a in self.actors:
            if a.id == actor_id:
                return a
        raise KeyError(actor_id)

    @property
    def ego(self) -> Actor:
        return self.actors[0]


def _route_for(scenario: ConcreteScenario, config: SimConfig):
    params = scenario.parameter_dict()
    ego = scenario.actor("ego")
    length = config.route_length
    half = LANE_WIDTH / 2
    if scenario.maneuver == "left_turn_intersection":
        xs, r, xe = INTERSECTION["turn_start_x"], INTERSECTION["turn_radius"], INTERSECTION["exit_x"]
        route = Route([
            ("line", ego.x, 0.0, xs, 0.0),
            ("arc", xs, r, r, -math.pi / 2, 0.0),
            ("line", xe, r, xe, r + INTERSECTION["exit_length"]),
        ])
        cx, cy = INTERSECTION["center"]
        boundaries = [((ego.x - 50.0, half), (cx - LANE_WIDTH, half)), ((cx, cy + LANE_WIDTH), (cx, 300.0))]
        return route, boundaries
    if scenario.maneuver == "overtaking":
        lead = scenario.actor("lead_vehicle")
        t_pass = (lead.x + CAR[0] + 12.0) / (params["ego_speed"] - params["lead_speed"])
        merge_x = params["ego_speed"] * t_pass
        route = Route([
            ("line", 0.0, LANE_WIDTH, merge_x, LANE_WIDTH),
            ("line", merge_x, LANE_WIDTH, merge_x + 30.0, 0.0),
            ("line", merge_x + 30.0, 0.0, max(length, merge_x + 80.0), 0.0),
        ])
    else:
        route = Route([("line", 0.0, 0.0, length, 0.0)])
    return route, [((-50.0, half), (length + 200.0, half))]


def build_world(scenario: ConcreteScenario, config: SimConfig | None = None) -> World:
    config = config or SimConfig()
    effects = effects_from_environment(scenario.environment_dict(), config)
    actors = []
    for p in scenario.actors:
        actors.append(Actor(p.id, p.role, p.kind, p.x, p.y, p.heading, p.speed, p.length, p.width,
                            dict(p.behavior)))
    actors.sort(key=lambda a: a.role != "ego")
    if not actors or actors[0].role != "ego" or sum(a.role == "ego" for a in actors) != 1:
        raise ScenarioError("scenario must contain exactly one ego")
    for i, a in enumerate(actors):
        for b in actors[i + 1 :]:
            if obb_overlap(_box(a.state()), _box(b.state())):
                raise ScenarioError(f"initial placements of {a.id!r} and {b.id!r} overlap")
    route, boundaries = _route_for(scenario, config)
    signal = None
    zone = (0.0, 0.0)
    if scenario.road == "intersection":
        green = scenario.parameter_dict().get("signal_green_time", 1e9)
        signal = Signal(INTERSECTION["ego_stop_line_x"], green)
        zone = INTERSECTION["center"]
    ids = {a.id for a in actors}
    for e in scenario.events:
        if e.actor not in ids or (e.condition == "gap_below" and e.reference not in ids):
            raise ScenarioError(f"event {e.action!r} references a missing actor")
    return World(scenario.id, config, effects, route, boundaries, actors, list(scenario.events), signal, zone)


def _apply_action(actor: Actor, action: str) -> None:
    b = actor.behavior
    if action == "sudden_brake":
        b["mode"] = "brake"
    elif action == "lane_change":
        b["lane_y"] = LANE_WIDTH if abs(b.get("lane_y", 0.0)) < 1e-9 else 0.0
    elif action == "pedestrian_dart":
        b["mode"] = "walk"
    elif action == "run_red_light":
        b["mode"] = "cruise"
        b["lane_y"] = actor.y


def _fire_triggers(world: World) -> None:
    t = world.clock
    for k, e in enumerate(world.events):
        if k in world.fired:
            continue
        actor = world.actor(e.actor)
        if e.condition == "time_elapsed":
            fire = t >= e.threshold - 1e-9
        elif e.condition == "gap_below":
            ref = world.actor(e.reference)
            fire = math.hypot(actor.x - ref.x, actor.y - ref.y) < e.threshold
        else:
            cx, cy = world.zone_center if world.signal is not None else (actor.x, actor.y)
            ego = world.ego
            fire = math.hypot(ego.x - cx, ego.y - cy) < e.threshold
        if fire:
            world.fired.add(k)
            _apply_action(actor, e.action)
            world.log_events.append(SimEvent(t, "trigger", (e.actor,), e.action))
            world.log_events.append(SimEvent(t, "hazard_onset", (e.actor,), e.action))


def _scripted_control(actor: Actor) -> tuple[float, float, float]:
    b = actor.behavior
    mode = b.get("mode", "cruise")
    if mode in ("brake", "wait", "stopped"):
        return 0.0, 1.0, 0.0
    direction = 1.0 if math.cos(actor.heading) >= 0 else -1.0
    path_heading = 0.0 if direction > 0 else math.pi
    err = (actor.y - b.get("lane_y", actor.y)) * direction
    psi = _wrap(actor.heading - path_heading)
    steer = -psi - math.atan2(1.0 * err, max(actor.speed, 1.0))
    steer = max(-0.6, min(0.6, steer))
    target = b.get("cruise_speed", actor.speed)
    dv = target - actor.speed
    if dv >= 0:
        return min(1.0, 0.5 * dv), 0.0, steer
    return 0.0, min(1.0, -0.25 * dv), steer


def _integrate(actor: Actor, control, world: World) -> None:
    cfg, env = world.config, world.effects
    dt = cfg.dt
    throttle, brake, steer = control
    v = actor.speed
    if actor.kind == "pedestrian":
        target = actor.behavior.get("walk_speed", 0.0) if actor.behavior.get("mode") == "walk" else 0.0
        dv = max(-cfg.pedestrian_accel * dt, min(cfg.pedestrian_accel * dt, target - v))
        v_new = max(0.0, v + dv)
        actor.x += v_new * math.cos(actor.heading) * dt
        actor.y += v_new * math.sin(actor.heading) * dt
        actor.accel = (v_new - v) / dt
        actor.speed = v_new
        return
    a = throttle * cfg.a_max * env.friction - brake * cfg.b_max * env.friction
    v_new = min(max(v + a * dt, 0.0), cfg.v_max)
    theta = actor.heading
    actor.x += v_new * math.cos(theta) * dt
    actor.y += v_new * math.sin(theta) * dt + env.crosswind * dt * dt
    actor.heading = _wrap(theta + v_new / cfg.wheelbase * math.tan(steer) * dt)
    actor.accel = (v_new - v) / dt
    actor.speed = v_new
    actor.steer = steer


def _perceive(world: World) -> list[VehicleState]:
    ego = world.ego
    vis = world.effects.visibility
    seen = []
    for a in world.actors[1:]:
        if math.hypot(a.x - ego.x, a.y - ego.y) <= vis:
            seen.append(a.state())
    sig = world.signal
    if sig is not None and sig.is_red(world.clock):
        front = ego.x + 0.5 * ego.length * math.cos(ego.heading)
        if front <= sig.stop_line_x and ego.y < LANE_WIDTH / 2 and sig.stop_line_x - ego.x <= vis:
            seen.append(VehicleState(sig.stop_line_x + 0.05, 0.0, 0.0, 0.0, length=0.1, width=LANE_WIDTH))
    return seen


def _ego_command(world: World) -> tuple[float, float, float]:
    ego = world.ego
    return ego_control(_perceive(world), ego.state(), world.route, world.config.ego,
                       ego.behavior.get("set_speed", ego.speed), world.config.wheelbase)


def step(world: World) -> World:
    """Advance the world one timestep in place and return it."""
    if world.terminated:
        raise RuntimeError("world has terminated")
    _fire_triggers(world)
    controls = [_ego_command(world)]
    world.last_control = controls[0]
    for actor in world.actors[1:]:
        controls.append((0.0, 0.0, 0.0) if actor.is_static or actor.kind == "pedestrian" else _scripted_control(actor))
    for actor, control in zip(world.actors, controls):
        if not actor.is_static:
            _integrate(actor, control, world)
    world.step_index += 1
    t = world.clock
    ego = world.ego

    ego_box = _box(ego.state())
    for a in world.actors[1:]:
        if obb_overlap(ego_box, _box(a.state())):
            world.log_events.append(SimEvent(t, "collision", ("ego", a.id)))
            world.terminated = True
    others = world.actors[1:]
    for i, a in enumerate(others):
        if a.is_static:
            continue
        for b in others:
            if b is a or (b.id, a.id) in world.collided_pairs or (a.id, b.id) in world.collided_pairs:
                continue
            if obb_overlap(_box(a.state()), _box(b.state())):
                world.collided_pairs.add((a.id, b.id))
                world.log_events.append(SimEvent(t, "collision", (a.id, b.id)))
                for c in (a, b):
                    if not c.is_static:
                        c.behavior["mode"] = "stopped"

    sig = world.signal
    if sig is not None and not world.violation_logged and sig.is_red(t):
        front = ego.x + 0.5 * ego.length * math.cos(ego.heading)
        prev_front = front - ego.speed * world.config.dt * math.cos(ego.heading)
        if prev_front < sig.stop_line_x <= front and ego.y < LANE_WIDTH / 2:
            world.violation_logged = True
            world.log_events.append(SimEvent(t, "signal_violation", ("ego",)))

    s, _ = world.route.project(ego.x, ego.y)
    if s >= world.route.length - 1.0:
        world.log_events.append(SimEvent(t, "route_complete", ("ego",)))
        world.terminated = True
    return world


# ---------------------------------------------------------------- logging and runs


@dataclass
class SimLog:
    scenario_id: str
    dt: float
    times: list
    actor_ids: tuple
    roles: dict
    states: dict
    controls: list
    events: list
    route: Route
    lane_boundaries: list
    signal_stop_line: float | None = None

    def __len__(self) -> int:
        return len(self.times)

    def ego_states(self) -> list[VehicleState]:
        return self.states["ego"]

    def to_rows(self) -> list[dict]:
        rows = []
        for k, t in enumerate(self.times):
            throttle, brake, steer_cmd = self.controls[k]
            for actor_id in self.actor_ids:
                s = self.states[actor_id][k]
                rows.append({
                    "t": f"{t:.4f}", "actor": actor_id, "x": repr(s.x), "y": repr(s.y), "heading": repr(s.heading),
                    "speed": repr(s.speed), "accel": repr(s.accel), "steer": repr(s.steer),
                    "throttle": repr(throttle) if actor_id == "ego" else "",
                    "brake": repr(brake) if actor_id == "ego" else "",
                })
        return rows

    def write_csv(self, path) -> None:
        rows = self.to_rows()
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["t", "actor"])
            writer.writeheader()
            writer.writerows(rows)

    def events_json(self) -> list[dict]:
        return [{"t": e.t, "kind": e.kind, "actors": list(e.actors), "detail": e.detail} for e in self.events]

    def write_events(self, path) -> None:
        Path(path).write_text(json.dumps(self.events_json(), indent=1), encoding="utf-8")


def run(world: World, duration: float | None = None) -> SimLog:
    """Simulate a copy of ``world`` until ``duration``, an ego collision or route completion."""
    world = copy.deepcopy(world)
    duration = world.config.duration if duration is None else duration
    if duration <= 0:
        raise ValueError("duration must be positive")
    n_steps = int(round(duration / world.config.dt))
    ids = tuple(a.id for a in world.actors)
    states = {a.id: [a.state()] for a in world.actors}
    times = [world.clock]
    controls = []
    for _ in range(n_steps):
        step(world)
        controls.append(world.last_control)
        times.append(world.clock)
        for a in world.actors:
            states[a.id].append(a.state())
        if world.terminated:
            break
    controls.append(_ego_command(world))
    return SimLog(
        scenario_id=world.scenario_id,
        dt=world.config.dt,
        times=times,
        actor_ids=ids,
        roles={a.id: a.role for a in world.actors},
        states=states,
        controls=controls,
        events=list(world.log_events),
        route=world.route,
        lane_boundaries=world.lane_boundaries,
        signal_stop_line=world.signal.stop_line_x if world.signal else None,
    )


def simulate(scenario: ConcreteScenario, config: SimConfig | None = None) -> SimLog:
    return run(build_world(scenario, config))
