"""Safety, comfort and efficiency metrics over a simulation log, and the risk verdict."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .driving_sim import SimLog, VehicleState, projected_extents


@dataclass(frozen=True)
class MetricConfig:
    reversal_rate_threshold: float = 0.05  # rad/s
    lane_change_dwell: float = 0.5  # s
    brake_edge: float = 0.1
    ttc_risk: float = 1.0  # s
    lateral_accel_risk: float = 5.0  # m/s^2


@dataclass(frozen=True)
class MetricReport:
    # safety
    distance_traveled: float
    duration: float
    crash: bool
    mean_speed: float
    speed_sd: float
    lateral_position_sd: float
    lateral_accel_max: float
    trajectory_offset_mean: float
    min_ttc: float | None
    collision_count: int
    sign_compliant: bool
    # comfort
    throttle_mean: float
    throttle_rate_max: float
    lane_change_count: int
    lane_change_mean_duration: float
    steering_sd: float
    steering_reversal_rate: float
    steering_rate_max: float
    # efficiency
    lane_change_time: float
    braking_count: int
    reaction_time: float | None

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, payload: dict) -> "MetricReport":
        return cls(**payload)

    def to_row(self) -> dict:
        return {k: ("" if v is None else v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class Verdict:
    risk_found: bool
    reasons: tuple[str, ...]

    def __post_init__(self):
        if self.risk_found != bool(self.reasons):
            raise ValueError("risk_found must be true exactly when reasons are given")

    def to_json(self) -> dict:
        return {"risk_found": self.risk_found, "reasons": list(self.reasons)}


def ttc(ego: VehicleState, other: VehicleState) -> float | None:
    """Time to collision along the ego heading, or ``None`` when not closing or not in line."""
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    rx, ry = other.x - ego.x, other.y - ego.y
    ahead, lateral = rx * c + ry * s, -rx * s + ry * c
    ext_x, ext_y = projected_extents(other, ego.heading)
    if ahead <= 0 or abs(lateral) > 0.5 * ego.width + ext_y:
        return None
    gap = max(ahead - 0.5 * ego.length - ext_x, 0.0)
    closing = ego.speed - other.speed * math.cos(other.heading - ego.heading)
    if closing <= 0:
        return None
    return gap / closing


def _side_of(boundary, x: float, y: float):
    (x0, y0), (x1, y1) = boundary
    dx, dy = x1 - x0, y1 - y0
    L2 = dx * dx + dy * dy
    t = ((x - x0) * dx + (y - y0) * dy) / L2
    if t < 0 or t > 1:
        return None, None
    d = (-(x - x0) * dy + (y - y0) * dx) / math.sqrt(L2)
    return d, math.atan2(dy, dx)


def _lane_changes(ego: Sequence[VehicleState], boundaries, dt: float, dwell: float) -> list[float]:
    """Durations of completed boundary crossings that were held for at least ``dwell`` seconds."""
    need = int(round(dwell / dt))
    durations = []
    for boundary in boundaries:
        dist, straddle = [], []
        for s in ego:
            d, h = _side_of(boundary, s.x, s.y)
            dist.append(d)
            if d is None:
                straddle.append(False)
            else:
                half = 0.5 * s.length * abs(math.sin(s.heading - h)) + 0.5 * s.width * abs(math.cos(s.heading - h))
                straddle.append(abs(d) < half)
        k = 1
        n = len(ego)
        # side the ego last held for the dwell time; returning to it is not a change
        settled = next((d > 0 for d in dist if d is not None and d != 0), None)
        while k < n:
            a, b = dist[k - 1], dist[k]
            if a is not None and b is not None and (a > 0) != (b > 0) and a != 0 and b != 0:
                side = b > 0
                j = k
                while j < n and dist[j] is not None and dist[j] != 0 and (dist[j] > 0) == side:
                    j += 1
                if j - k >= need and side != settled:
                    settled = side
                    lo = k
                    while lo > 0 and straddle[lo - 1]:
                        lo -= 1
                    hi = k
                    while hi < n and straddle[hi]:
                        hi += 1
                    durations.append((hi - lo) * dt)
                k = j
            else:
                k += 1
    return durations


def _significant_runs(rates: np.ndarray, threshold: float) -> int:
    signs = np.sign(rates[np.abs(rates) > threshold])
    if signs.size == 0:
        return 0
    return int(1 + np.count_nonzero(signs[1:] != signs[:-1]))


def compute_metrics(log: SimLog, config: MetricConfig | None = None) -> MetricReport:
    """Evaluate the full metric suite on the ego trajectory of ``log``."""
    config = config or MetricConfig()
    if len(log) < 2:
        raise ValueError("log needs at least two records")
    dt = log.dt
    ego = log.states["ego"]
    x = np.array([s.x for s in ego])
    y = np.array([s.y for s in ego])
    heading = np.array([s.heading for s in ego])
    speed = np.array([s.speed for s in ego])
    steer = np.array([s.steer for s in ego])
    controls = np.asarray(log.controls, dtype=float).reshape(-1, 3)
    throttle, brake = controls[:, 0], controls[:, 1]
    times = np.asarray(log.times)

    lateral = np.array([log.route.project(s.x, s.y)[1] for s in ego])
    yaw_rate = (np.mod(np.diff(heading) + math.pi, 2 * math.pi) - math.pi) / dt
    lat_accel = speed[1:] * yaw_rate

    ego_collisions = [e for e in log.events if e.kind == "collision" and "ego" in e.actors]

    best = None
    for k, e in enumerate(ego):
        for actor_id in log.actor_ids:
            if actor_id == "ego":
                continue
            value = ttc(e, log.states[actor_id][k])
            if value is not None and value > 0 and (best is None or value < best):
                best = value

    steer_rate = np.diff(steer) / dt
    durations = _lane_changes(ego, log.lane_boundaries, dt, config.lane_change_dwell)

    pressed = brake > config.brake_edge
    edges = pressed & ~np.concatenate([[False], pressed[:-1]])

    reaction = None
    onsets = [e.t for e in log.events if e.kind == "hazard_onset"]
    if onsets:
        onset = onsets[0]
        k0 = int(np.searchsorted(times, onset - 1e-9))
        if k0 < len(times):
            if pressed[k0]:
                reaction = 0.0
            else:
                later = np.flatnonzero(edges[k0:])
                if later.size:
                    reaction = float(times[k0 + later[0]] - onset)

    duration = float(times[-1] - times[0])
    return MetricReport(
        distance_traveled=float(np.hypot(np.diff(x), np.diff(y)).sum()),
        duration=duration,
        crash=bool(ego_collisions),
        mean_speed=float(speed.mean()),
        speed_sd=float(speed.std()),
        lateral_position_sd=float(lateral.std()),
        lateral_accel_max=float(np.abs(lat_accel).max()),
        trajectory_offset_mean=float(np.abs(lateral).mean()),
        min_ttc=best,
        collision_count=len(ego_collisions),
        sign_compliant=not any(e.kind == "signal_violation" for e in log.events),
        throttle_mean=float(throttle.mean()),
        throttle_rate_max=float(np.abs(np.diff(throttle)).max() / dt),
        lane_change_count=len(durations),
        lane_change_mean_duration=float(np.mean(durations)) if durations else 0.0,
        steering_sd=float(steer.std()),
        steering_reversal_rate=_significant_runs(steer_rate, config.reversal_rate_threshold) / (duration / 60.0),
        steering_rate_max=float(np.abs(steer_rate).max()),
        lane_change_time=float(np.sum(durations)) if durations else 0.0,
        braking_count=int(edges.sum()),
        reaction_time=reaction,
    )


def classify(report: MetricReport, config: MetricConfig | None = None) -> Verdict:
    config = config or MetricConfig()
    reasons = []
    if report.crash:
        reasons.append("crash")
    if report.min_ttc is not None and report.min_ttc < config.ttc_risk:
        reasons.append("ttc")
    if not report.sign_compliant:
        reasons.append("sign_violation")
    if report.lateral_accel_max > config.lateral_accel_risk:
        reasons.append("lateral_accel")
    return Verdict(bool(reasons), tuple(reasons))


def write_reports_csv(reports: Sequence[tuple[str, MetricReport, Verdict]], path) -> None:
    names = [f.name for f in fields(MetricReport)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario_id", *names, "risk_found", "reasons"])
        for scenario_id, report, verdict in reports:
            row = report.to_row()
            writer.writerow([scenario_id, *(row[n] for n in names), verdict.risk_found, ";".join(verdict.reasons)])


def write_reports_json(reports: Sequence[tuple[str, MetricReport, Verdict]], path) -> None:
    payload = [{"scenario_id": sid, "metrics": r.to_json(), "verdict": v.to_json()} for sid, r, v in reports]
    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")
