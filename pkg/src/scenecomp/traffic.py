"""Car-following simulation: IDM longitudinal control, a centerline-seeking
lateral heuristic, and cost-based lane choice, stepped at 10 Hz.

Longitudinal positions are arclengths along lane centerlines; actors cross
onto the first successor when they pass a lane end and extrapolate along the
final tangent when there is none.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CollisionDetected, NonPositiveGap
from .geometry import OrientedBox2D, Pose6DoF, boxes_collide, pose_from_bev
from .lanemap import GroundElevation, LaneGraph

COLLISION_DIST = 2.0  # m, bumper-to-bumper
CHAIN_HORIZON = 200.0  # m, leader/follower search range along successors
LANE_CHANGE_COOLDOWN_STEPS = 20  # 2 s at 10 Hz
MAX_LATERAL_ACCEL = 3.0  # m/s^2


@dataclass(frozen=True)
class IdmParams:
    v0_min: float = 15.0  # m/s
    v0_max: float = 25.0  # m/s
    delta: float = 4.0  # acceleration exponent
    a_max: float = 5.0  # m/s^2
    b: float = 5.0  # m/s^2 comfortable deceleration
    s0: float = 2.0  # m minimum gap
    T: float = 1.5  # s headway time
    default_length: float = 4.5  # m
    dt: float = 0.1  # s (10 Hz)


@dataclass(frozen=True)
class BehaviorCosts:
    c_h: float
    c_f: float
    c_l: float
    c_lane_change: float = 1.0e3

    def total(self, is_change: bool) -> float:
        return self.c_h + self.c_f + self.c_l + (self.c_lane_change if is_change else 0.0)


@dataclass
class KinematicState:
    lane_id: str
    long_pos: float  # m, arclength along the lane
    long_vel: float  # m/s, >= 0
    lat_pos: float = 0.0  # m, left of centerline positive
    lat_vel: float = 0.0  # m/s
    accel: float = 0.0  # m/s^2, last commanded

    def __post_init__(self):
        if self.long_vel < 0:
            raise ValueError("longitudinal velocity must be >= 0")


@dataclass
class Actor:
    actor_id: int
    state: KinematicState
    target_speed: float  # per-actor v0, fixed at spawn
    length: float = 4.5
    width: float = 2.0
    asset_id: str | None = None
    cooldown: int = 0


def idm_accel(v: float, v0: float, gap: float, dv: float, params: IdmParams) -> float:
    """Intelligent-Driver-Model acceleration, clipped to +/- a_max.

    ``gap`` is the bumper-to-bumper distance to the leader (+inf for free
    road); ``dv`` is the closing speed v_follower - v_leader.
    """
    if gap <= 0.0:
        raise NonPositiveGap(f"gap={gap} (caller must prevent collisions)")
    if v0 <= 0.0:
        raise ValueError("target speed must be positive")
    s_star = params.s0 + v * params.T + v * dv / (2.0 * math.sqrt(params.a_max * params.b))
    interaction = 0.0 if math.isinf(gap) else (s_star / gap) ** 2
    a = params.a_max * (1.0 - (v / v0) ** params.delta - interaction)
    return min(max(a, -params.a_max), params.a_max)


def lateral_target_velocity(state: KinematicState) -> float:
    """Target lateral speed seeking the centerline: min(-lat_pos, 0.1 * v_long)."""
    return min(-state.lat_pos, 0.1 * state.long_vel)


def behavior_costs(d_h: float, d_f: float, d_l: float) -> BehaviorCosts:
    """Lane-occupancy costs from headway, follower, and lane-end distances."""
    if d_h < 0 or d_f < 0 or d_l < 0:
        raise ValueError("distances must be >= 0")
    c_h = 1.0e8 if d_h < 2.0 else 1.0e4 / d_h
    c_f = 1.0e8 if d_f < 2.0 else 1.0e2 / d_f
    c_l = math.inf if d_l == 0.0 else 1.0e5 / d_l
    return BehaviorCosts(c_h=c_h, c_f=c_f, c_l=c_l)


def choose_lane(current_lane: str, costs_by_lane: dict[str, BehaviorCosts]) -> str:
    """Minimum-total-cost lane; ties keep the current lane."""
    best = current_lane
    best_cost = costs_by_lane[current_lane].total(is_change=False)
    for lane_id, costs in costs_by_lane.items():
        if lane_id == current_lane:
            continue
        c = costs.total(is_change=True)
        if c < best_cost:
            best, best_cost = lane_id, c
    return best


def step_actor(actor: Actor, leader: Actor | None, params: IdmParams) -> KinematicState:
    """One 10 Hz semi-implicit Euler step of one actor.

    Raises CollisionDetected if the post-step bumper gap to the leader drops
    below the 2 m safety distance (leader assumed to hold its speed).
    """
    st = actor.state
    if leader is not None:
        center_gap = leader.state.long_pos - st.long_pos
        gap = center_gap - (leader.length + actor.length) / 2.0
        dv = st.long_vel - leader.state.long_vel
        a = idm_accel(st.long_vel, actor.target_speed, gap, dv, params)
    else:
        a = idm_accel(st.long_vel, actor.target_speed, math.inf, 0.0, params)

    v_new = max(st.long_vel + a * params.dt, 0.0)
    s_new = st.long_pos + v_new * params.dt

    target = lateral_target_velocity(st)
    dv_lat = min(max(target - st.lat_vel, -MAX_LATERAL_ACCEL * params.dt), MAX_LATERAL_ACCEL * params.dt)
    vlat_new = st.lat_vel + dv_lat
    lat_new = st.lat_pos + vlat_new * params.dt

    if leader is not None:
        leader_s = leader.state.long_pos + leader.state.long_vel * params.dt
        post_gap = (leader_s - s_new) - (leader.length + actor.length) / 2.0
        if post_gap < COLLISION_DIST:
            raise CollisionDetected(
                f"actor {actor.actor_id} gap {post_gap:.2f} m behind actor {leader.actor_id}"
            )
    return KinematicState(st.lane_id, s_new, v_new, lat_new, vlat_new, a)


def chain_distance(graph: LaneGraph, lane_a: str, s_a: float, lane_b: str, s_b: float,
                   horizon: float = CHAIN_HORIZON) -> float | None:
    """Arclength from (lane_a, s_a) forward to (lane_b, s_b) along successors.

    None if lane_b is not reachable within the horizon (or lies behind).
    """
    if lane_a == lane_b:
        d = s_b - s_a
        return d if d >= 0.0 else None
    d = graph.lane(lane_a).length - s_a
    lane = lane_a
    seen = {lane_a}
    while d <= horizon:
        lane_obj = graph.lane(lane)
        if not lane_obj.successors:
            return None
        lane = lane_obj.successors[0]
        if lane in seen:
            return None
        seen.add(lane)
        if lane == lane_b:
            return d + s_b
        d += graph.lane(lane).length
    return None


def _nearest_on_chain(graph: LaneGraph, lane_id: str, s: float, length: float,
                      others: list[Actor]) -> tuple[Actor | None, float, Actor | None, float]:
    """Nearest leader/follower (and bumper gaps) along the lane's chain."""
    leader, d_h = None, math.inf
    follower, d_f = None, math.inf
    for other in others:
        fwd = chain_distance(graph, lane_id, s, other.state.lane_id, other.state.long_pos)
        if fwd is not None and fwd > 0.0:
            gap = fwd - (length + other.length) / 2.0
            if gap < d_h:
                leader, d_h = other, gap
        back = chain_distance(graph, other.state.lane_id, other.state.long_pos, lane_id, s)
        if back is not None and back > 0.0:
            gap = back - (length + other.length) / 2.0
            if gap < d_f:
                follower, d_f = other, gap
    return leader, max(d_h, 0.0), follower, max(d_f, 0.0)


def evaluate_lane_options(graph: LaneGraph, actor: Actor, others: list[Actor]) -> dict[str, BehaviorCosts]:
    """Behavior costs for the current lane and each geometric neighbor."""
    st = actor.state
    lane = graph.lane(st.lane_id)
    pos = lane.point_at(st.long_pos)
    options: dict[str, BehaviorCosts] = {}
    for lane_id in [st.lane_id] + graph.neighbors_of(st.lane_id, st.long_pos):
        if lane_id == st.lane_id:
            s_here = st.long_pos
        else:
            s_here, _ = graph.lane(lane_id).project(pos[0], pos[1])
        _, d_h, _, d_f = _nearest_on_chain(graph, lane_id, s_here, actor.length, others)
        d_l = graph.distance_to_end(lane_id, s_here)
        options[lane_id] = behavior_costs(d_h, d_f, d_l)
    return options


@dataclass
class ActorTrajectory:
    actor_id: int
    asset_id: str | None
    length: float
    width: float
    times: list[float] = field(default_factory=list)
    poses: list[Pose6DoF] = field(default_factory=list)
    speeds: list[float] = field(default_factory=list)
    states: list[KinematicState] = field(default_factory=list)


def _world_state(graph: LaneGraph, elevation: GroundElevation, st: KinematicState) -> tuple[float, float, float, float]:
    lane = graph.lane(st.lane_id)
    base = lane.point_at(st.long_pos)
    h = lane.heading_at(st.long_pos)
    nx, ny = -math.sin(h), math.cos(h)
    x = base[0] + st.lat_pos * nx
    y = base[1] + st.lat_pos * ny
    z = elevation.query(x, y)
    return x, y, z, h


def _check_separation(graph: LaneGraph, elevation: GroundElevation, actors: list[Actor]) -> None:
    for i in range(len(actors)):
        for j in range(i + 1, len(actors)):
            a, b = actors[i], actors[j]
            fwd = chain_distance(graph, a.state.lane_id, a.state.long_pos, b.state.lane_id, b.state.long_pos)
            back = chain_distance(graph, b.state.lane_id, b.state.long_pos, a.state.lane_id, a.state.long_pos)
            center = fwd if fwd is not None else back
            if center is not None:
                gap = abs(center) - (a.length + b.length) / 2.0
                if gap < COLLISION_DIST:
                    raise CollisionDetected(
                        f"actors {a.actor_id}/{b.actor_id} bumper gap {gap:.2f} m"
                    )
                continue
            xa, ya, _, ha = _world_state(graph, elevation, a.state)
            xb, yb, _, hb = _world_state(graph, elevation, b.state)
            box_a = OrientedBox2D(xa, ya, a.length / 2 + 1.0, a.width / 2 + 1.0, ha)
            box_b = OrientedBox2D(xb, yb, b.length / 2 + 1.0, b.width / 2 + 1.0, hb)
            if boxes_collide(box_a, box_b):
                raise CollisionDetected(
                    f"actors {a.actor_id}/{b.actor_id} within 2 m clearance"
                )


def _advance_lane(graph: LaneGraph, st: KinematicState) -> KinematicState:
    lane = graph.lane(st.lane_id)
    while st.long_pos > lane.length and lane.successors:
        st = replace(st, lane_id=lane.successors[0], long_pos=st.long_pos - lane.length)
        lane = graph.lane(st.lane_id)
    return st


def rollout(
    graph: LaneGraph,
    elevation: GroundElevation,
    actors: list[Actor],
    duration_s: float,
    params: IdmParams = IdmParams(),
    lane_changes: bool = True,
) -> list[ActorTrajectory]:
    """Simulate all actors for duration_s at 10 Hz; returns n_steps+1 samples.

    Deterministic: no randomness is consumed here (per-actor target speeds are
    fixed at spawn). Propagates CollisionDetected from the safety checks.
    """
    n_steps = round(duration_s / params.dt)
    actors = [replace(a, state=replace(a.state)) for a in actors]
    trajs = [ActorTrajectory(a.actor_id, a.asset_id, a.length, a.width) for a in actors]

    _check_separation(graph, elevation, actors)
    _record(graph, elevation, actors, trajs, t=0.0)

    for k in range(1, n_steps + 1):
        if lane_changes:
            for a in actors:
                if a.cooldown > 0:
                    a.cooldown -= 1
                    continue
                others = [o for o in actors if o.actor_id != a.actor_id]
                options = evaluate_lane_options(graph, a, others)
                pick = choose_lane(a.state.lane_id, options)
                if pick != a.state.lane_id:
                    lane = graph.lane(a.state.lane_id)
                    pos = lane.point_at(a.state.long_pos)
                    s_new, lat_new = graph.lane(pick).project(pos[0], pos[1])
                    a.state = replace(a.state, lane_id=pick, long_pos=s_new, lat_pos=lat_new)
                    a.cooldown = LANE_CHANGE_COOLDOWN_STEPS

        new_states = []
        for a in actors:
            others = [o for o in actors if o.actor_id != a.actor_id]
            leader, _, _, _ = _nearest_on_chain(
                graph, a.state.lane_id, a.state.long_pos, a.length, others
            )
            new_states.append(step_actor(a, leader, params))
        for a, st in zip(actors, new_states):
            a.state = _advance_lane(graph, st)

        _check_separation(graph, elevation, actors)
        _record(graph, elevation, actors, trajs, t=k * params.dt)
    return trajs


def _record(graph, elevation, actors, trajs, t):
    for a, tr in zip(actors, trajs):
        x, y, z, h = _world_state(graph, elevation, a.state)
        tr.times.append(t)
        tr.poses.append(pose_from_bev(x, y, z, h))
        tr.speeds.append(a.state.long_vel)
        tr.states.append(replace(a.state))


def safe_spawn_speed(gap: float, leader_speed: float, desired: float, params: IdmParams = IdmParams()) -> float:
    """Largest spawn speed whose IDM desired gap fits the available gap.

    Solves s0 + v*T + v*(v - v_lead)/(2*sqrt(a*b)) <= gap for v >= 0 and caps
    the desired speed with it, so a freshly spawned follower never starts
    inside its own braking envelope.
    """
    if math.isinf(gap):
        return desired
    root = 2.0 * math.sqrt(params.a_max * params.b)
    # v^2/root + v*(T - v_lead/root) + (s0 - gap) <= 0
    a = 1.0 / root
    b = params.T - leader_speed / root
    c = params.s0 - gap
    disc = b * b - 4.0 * a * c
    if disc <= 0.0:
        return 0.0
    v_max = (-b + math.sqrt(disc)) / (2.0 * a)
    return max(0.0, min(desired, v_max))
