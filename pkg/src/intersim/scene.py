"""Vehicle lifecycle and the synchronous per-tick simulation loop.

Every active vehicle picks an action from the common joint state s_t,
then all states advance at once, so no vehicle reacts to another's
same-tick decision. Background vehicles that fail or succeed are
re-initialized at a fresh entrance (the training-loop semantics, kept
during evaluation so traffic density stays constant); the vehicle under
test terminates the episode instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import (
    DEFAULT_ACTIONS,
    DT_S,
    PHASE_APPROACH,
    V_MAX,
    VehicleState,
    _zone_in_lane,
    step,
    update_goal,
)
from .geometry import (
    Pose2,
    RoadNetwork,
    euclidean_dist,
    rects_overlap,
    segments_hit_rects,
    turn_targets,
)
from .planner import DEFAULT_PLANNER, PlannerConfig, expert_policy
from .reward import DEFAULT_ZONES

MIN_SEPARATION_M = 10.0
T_LIMIT_S = 300.0

STATUS_ACTIVE = "active"
STATUS_FAILED = "failed"
STATUS_SUCCEEDED = "succeeded"

OUTCOME_COLLISION = "collision"
OUTCOME_DEADLOCK = "deadlock"
OUTCOME_SUCCESS = "success"


# ---------------------------------------------------------------------------
# routing and spawning


def route_from_entry(
    network: RoadNetwork, name: str, arm_id: str, rng: np.random.Generator, max_hops: int = 8
) -> List[str]:
    """Random legal target-lane sequence from an entrance arm until the
    route leaves the network. U-turns are legal only at roundabouts."""
    refs: List[str] = []
    cur_name, cur_arm = name, arm_id
    for hop in range(max_hops + 1):
        lay = network.layouts[cur_name]
        arms = list(lay.arms)
        if lay.kind != "roundabout":
            arms = [a for a in arms if a != cur_arm]
        if hop >= max_hops:
            # steer long walks out of the network
            open_here = [a for a in arms if network.neighbor(cur_name, a) is None]
            if open_here:
                arms = open_here
        exit_arm = arms[rng.integers(len(arms))]
        refs.extend(f"{cur_name}:{t}" for t in turn_targets(lay, cur_arm, exit_arm))
        nxt = network.neighbor(cur_name, exit_arm)
        if nxt is None:
            break
        cur_name, cur_arm = nxt
    return refs


def spawn_vehicle(
    network: RoadNetwork,
    states: Sequence[Optional[VehicleState]],
    rng: np.random.Generator,
    min_sep: float = MIN_SEPARATION_M,
    entry: Optional[str] = None,
    max_tries: int = 30,
) -> Optional[VehicleState]:
    """Place a vehicle on an entrance lane with lane-aligned heading and a
    random legal route. Returns None when no placement clears min_sep
    (spawn deferred to a later tick)."""
    entries = [entry] if entry is not None else network.entry_lanes()
    for _ in range(max_tries):
        ref = entries[rng.integers(len(entries))]
        lay, lane = network.resolve(ref)
        t = rng.uniform(0.05, 0.95)
        x = lane.p0[0] + t * (lane.p1[0] - lane.p0[0])
        y = lane.p0[1] + t * (lane.p1[1] - lane.p0[1])
        if any(
            s is not None and euclidean_dist((x, y), (s.pose.x, s.pose.y)) < min_sep
            for s in states
        ):
            continue
        name, lane_id = ref.split(":")
        arm_id = lane_id.split(".")[0]
        refs = route_from_entry(network, name, arm_id, rng)
        return VehicleState(
            Pose2(x, y, lane.heading),
            float(rng.uniform(0.0, V_MAX)),
            goal_ref=refs[0],
            layout_label=lay.label,
            target_lane_seq=refs[1:],
            phase=PHASE_APPROACH,
        )
    return None


# ---------------------------------------------------------------------------
# lifecycle predicates


def _zone_hits_road_edges(state: VehicleState, lay, zones=DEFAULT_ZONES) -> bool:
    cz = zones.c_zone(state.pose)
    x = np.array([cz.cx])
    y = np.array([cz.cy])
    th = np.array([cz.theta])
    bounds = lay.boundary_segments()
    if bounds.shape[0] and segments_hit_rects(bounds, x, y, th, cz.length, cz.width)[0]:
        return True
    marks = lay.marking_segments()
    if marks.shape[0] and segments_hit_rects(marks, x, y, th, cz.length, cz.width)[0]:
        return True
    return False


def detect_fail(
    states: Sequence[Optional[VehicleState]],
    i: int,
    network: RoadNetwork,
    zones=DEFAULT_ZONES,
) -> bool:
    """A vehicle fails on c-zone overlap with another vehicle, on touching
    a road boundary, or on crossing an opposing-traffic marking."""
    st = states[i]
    cz = zones.c_zone(st.pose)
    reach = zones.c_length + 1.0
    for j, other in enumerate(states):
        if j == i or other is None:
            continue
        if euclidean_dist((st.pose.x, st.pose.y), (other.pose.x, other.pose.y)) > reach:
            continue
        if rects_overlap(cz, zones.c_zone(other.pose)):
            return True
    name, _, _ = assign_local_context(states, i, network)
    if _zone_hits_road_edges(st, network.layouts[name], zones):
        return True
    goal_name = st.goal_ref.split(":")[0]
    if goal_name != name and _zone_hits_road_edges(st, network.layouts[goal_name], zones):
        return True
    return False


def detect_success(state: VehicleState, network: RoadNetwork, zones=DEFAULT_ZONES) -> bool:
    """True once the target sequence is exhausted and the vehicle sits
    fully inside its final exit lane."""
    if state.target_lane_seq:
        return False
    lay, lane = network.resolve(state.goal_ref)
    if lane.kind != "out":
        return False
    return _zone_in_lane(state, lay, lane, zones.c_length, zones.c_width)


def assign_local_context(
    states: Sequence[Optional[VehicleState]],
    i: int,
    network: RoadNetwork,
    radius: float = 40.0,
) -> Tuple[str, Tuple[float, float], List[int]]:
    """Active intersection for vehicle i plus its interaction neighbors.

    Nearest center by Euclidean distance, ties to listing order; a vehicle
    in a shared arm corridor is assigned to the side its route heads for,
    so handoff happens mid-connector rather than at the far mouth.
    """
    st = states[i]
    x, y = st.pose.x, st.pose.y
    name = network.nearest_layout(x, y)
    goal_name = st.goal_ref.split(":")[0]
    if goal_name != name:
        lay = network.layouts[name]
        for arm in lay.arms.values():
            nb = network.neighbor(name, arm.id)
            if nb is None or nb[0] != goal_name:
                continue
            u, w = lay.arm_frame(arm.id, x, y)
            if u >= arm.u_start and abs(w) <= lay.params["lane_width"]:
                name = goal_name
                break
    neighbors = [
        j
        for j, s in enumerate(states)
        if j != i
        and s is not None
        and euclidean_dist((x, y), (s.pose.x, s.pose.y)) <= radius
    ]
    return name, network.layouts[name].center, neighbors


# ---------------------------------------------------------------------------
# policies and controllers


class TrafficPolicy:
    """Decides background-vehicle actions from the common joint state."""

    def select(
        self,
        states: Sequence[Optional[VehicleState]],
        levels: Sequence[int],
        indices: Sequence[int],
        network: RoadNetwork,
    ) -> Dict[int, int]:
        raise NotImplementedError


class ExpertTraffic(TrafficPolicy):
    """Runs the full game-tree search every tick. Exact but slow; the
    distilled approximators are the production path."""

    def __init__(self, cfg: PlannerConfig = DEFAULT_PLANNER):
        self.cfg = cfg

    def select(self, states, levels, indices, network):
        cache: dict = {}
        return {
            i: expert_policy(states, i, levels[i], network, self.cfg, cache).action_sequence[0]
            for i in indices
        }


class AVController:
    """Per-episode controller for the vehicle under test. Subclasses
    override decide; observe and reset_belief default to no-ops."""

    def decide(
        self, states: Sequence[Optional[VehicleState]], i: int, network: RoadNetwork
    ) -> int:
        raise NotImplementedError

    def observe(
        self,
        prev_states: Sequence[Optional[VehicleState]],
        actions: Dict[int, int],
        network: RoadNetwork,
    ) -> None:
        pass

    def reset_belief(self, i: int) -> None:
        pass

    def advance(
        self,
        states: Sequence[Optional[VehicleState]],
        i: int,
        network: RoadNetwork,
        dt: float,
    ) -> Optional[Tuple[Pose2, float]]:
        """Optional kinematic override applied after decide. Return the
        next (pose, speed) to replace the unicycle step, or None to keep
        it. Path-following controllers use this to stay on their
        reference curve, which the quantized heading-rate actions cannot
        track."""
        return None


# ---------------------------------------------------------------------------
# episode state and the synchronous step


@dataclass
class SceneConfig:
    network: RoadNetwork
    n_vehicles: int
    traffic_model: str = "mixed"  # l1 | l2 | mixed
    av_policy: Optional[str] = None
    dt: float = DT_S
    t_limit_s: float = T_LIMIT_S
    respawn: bool = True
    min_sep_m: float = MIN_SEPARATION_M
    name: str = "scene"


@dataclass
class EpisodeState:
    states: List[Optional[VehicleState]]
    levels: List[int]
    tags: List[str]
    rng: np.random.Generator
    av_index: Optional[int] = None
    tick: int = 0
    done: bool = False
    outcome: Optional[str] = None
    av_speed_sum: float = 0.0
    av_ticks: int = 0
    log: List[str] = field(default_factory=list)
    collect_log: bool = True
    retired: set = field(default_factory=set)


def draw_levels(n: int, traffic_model: str, rng: np.random.Generator) -> List[int]:
    if traffic_model == "l1":
        return [1] * n
    if traffic_model == "l2":
        return [2] * n
    if traffic_model == "mixed":
        return [int(1 + rng.integers(2)) for _ in range(n)]
    raise ValueError(f"unknown traffic model {traffic_model!r}")


def init_episode(cfg: SceneConfig, seed, collect_log: bool = True) -> EpisodeState:
    rng = np.random.default_rng(seed)
    n = cfg.n_vehicles
    states: List[Optional[VehicleState]] = []
    tags: List[str] = []
    av_index = None
    if cfg.av_policy is not None:
        av_index = 0
        states.append(spawn_vehicle(cfg.network, states, rng, cfg.min_sep_m))
        tags.append(cfg.av_policy)
    levels_bg = draw_levels(n, cfg.traffic_model, rng)
    for lv in levels_bg:
        states.append(spawn_vehicle(cfg.network, states, rng, cfg.min_sep_m))
        tags.append(f"l{lv}")
    levels = ([0] if av_index is not None else []) + levels_bg
    return EpisodeState(
        states=states,
        levels=levels,
        tags=tags,
        rng=rng,
        av_index=av_index,
        collect_log=collect_log,
    )


def _log_record(ep: EpisodeState, i: int, action: Optional[int], status: str) -> str:
    st = ep.states[i]
    rec = {
        "tick": ep.tick,
        "id": i,
        "x": round(st.pose.x, 6),
        "y": round(st.pose.y, 6),
        "v": round(st.speed, 6),
        "theta": round(st.pose.theta, 6),
        "action": action,
        "policy": ep.tags[i],
        "status": status,
    }
    return json.dumps(rec, separators=(",", ":"))


def sim_step(
    ep: EpisodeState,
    cfg: SceneConfig,
    traffic: TrafficPolicy,
    av: Optional[AVController] = None,
) -> EpisodeState:
    """One synchronous tick: deferred spawns, action selection from s_t,
    simultaneous state advance, goal updates, fail/success handling,
    belief observation."""
    if ep.done:
        return ep
    net = cfg.network
    for i, s in enumerate(ep.states):
        if s is None and i not in ep.retired:
            ep.states[i] = spawn_vehicle(net, ep.states, ep.rng, cfg.min_sep_m)
            if ep.states[i] is not None and av is not None:
                av.reset_belief(i)

    active = [i for i, s in enumerate(ep.states) if s is not None]
    bg = [i for i in active if i != ep.av_index]
    actions = traffic.select(ep.states, ep.levels, bg, net)
    if av is not None and ep.av_index in active:
        actions[ep.av_index] = av.decide(ep.states, ep.av_index, net)

    if ep.collect_log:
        for i in active:
            ep.log.append(_log_record(ep, i, actions[i], STATUS_ACTIVE))

    prev = [s.copy() if s is not None else None for s in ep.states]
    goal_results: Dict[int, Optional[str]] = {}
    for i in active:
        st = ep.states[i]
        moved = None
        if av is not None and i == ep.av_index:
            moved = av.advance(ep.states, i, net, cfg.dt)
        if moved is None:
            moved = step(st.pose, st.speed, DEFAULT_ACTIONS[actions[i]], dt=cfg.dt)
        st.pose, st.speed = moved
        goal_results[i] = update_goal(st, net)
    if ep.av_index is not None and ep.av_index in active:
        ep.av_speed_sum += ep.states[ep.av_index].speed
        ep.av_ticks += 1

    for i in active:
        failed = detect_fail(ep.states, i, net)
        succeeded = not failed and (
            goal_results[i] == "done" or detect_success(ep.states[i], net)
        )
        if i == ep.av_index:
            if failed:
                ep.done, ep.outcome = True, OUTCOME_COLLISION
            elif succeeded:
                ep.done, ep.outcome = True, OUTCOME_SUCCESS
        elif failed or succeeded:
            status = STATUS_FAILED if failed else STATUS_SUCCEEDED
            if ep.collect_log:
                ep.log.append(_log_record(ep, i, None, status))
            if cfg.respawn:
                ep.states[i] = spawn_vehicle(net, ep.states, ep.rng, cfg.min_sep_m)
                if av is not None:
                    av.reset_belief(i)
            else:
                ep.states[i] = None
                ep.retired.add(i)
                if failed and ep.av_index is None:
                    ep.done, ep.outcome = True, OUTCOME_COLLISION

    if av is not None:
        av.observe(prev, actions, net)

    ep.tick += 1
    if not ep.done:
        if ep.av_index is None and not cfg.respawn and all(s is None for s in ep.states):
            ep.done, ep.outcome = True, OUTCOME_SUCCESS
        elif ep.tick * cfg.dt >= cfg.t_limit_s:
            ep.done, ep.outcome = True, OUTCOME_DEADLOCK
    return ep


def run_episode(
    cfg: SceneConfig,
    traffic: TrafficPolicy,
    av: Optional[AVController],
    seed,
    collect_log: bool = False,
    episode: Optional[EpisodeState] = None,
) -> dict:
    """Runs one seeded episode to termination and classifies it."""
    ep = episode if episode is not None else init_episode(cfg, seed, collect_log)
    ep.collect_log = collect_log
    while not ep.done:
        sim_step(ep, cfg, traffic, av)
    mean_v = ep.av_speed_sum / ep.av_ticks if ep.av_ticks else 0.0
    return {
        "outcome": ep.outcome,
        "mean_speed": mean_v,
        "duration_s": ep.tick * cfg.dt,
        "ticks": ep.tick,
        "log": ep.log,
    }


def write_ndjson(lines: Sequence[str], path: str) -> None:
    with open(path, "w") as f:
        for line in lines:
            f.write(line + "\n")


# ---------------------------------------------------------------------------
# deterministic conflict scenes for qualitative studies


def conflict_scene(
    network: RoadNetwork,
    n_vehicles: int,
    rng: np.random.Generator,
    base_gap_m: float = 8.0,
    jitter_m: float = 2.5,
    base_speed: float = 2.5,
    jitter_speed: float = 1.0,
) -> List[VehicleState]:
    """Vehicles on distinct entrance arms at matched distances from the
    core, arriving near-simultaneously. Small jitter makes seeded
    perturbation studies out of one nominal geometry."""
    name = network.names[0]
    lay = network.layouts[name]
    arm_ids = list(lay.arms)
    states: List[VehicleState] = []
    for idx in range(n_vehicles):
        arm = lay.arms[arm_ids[idx % len(arm_ids)]]
        gap = base_gap_m + rng.uniform(-jitter_m, jitter_m)
        u = min(arm.u_start + gap, arm.u_end - 1.0)
        ux, uy = arm.unit_u()
        wx, wy = arm.unit_w()
        lw = lay.params["lane_width"]
        x = lay.center[0] + ux * u + wx * 0.5 * lw
        y = lay.center[1] + uy * u + wy * 0.5 * lw
        heading = math.atan2(-uy, -ux)
        refs = route_from_entry(network, name, arm.id, rng)
        v = min(V_MAX, max(0.0, base_speed + rng.uniform(-jitter_speed, jitter_speed)))
        states.append(
            VehicleState(
                Pose2(x, y, heading),
                v,
                goal_ref=refs[0],
                layout_label=lay.label,
                target_lane_seq=refs[1:],
                phase=PHASE_APPROACH,
            )
        )
    return states


def episode_from_states(
    cfg: SceneConfig, states: List[VehicleState], seed, collect_log: bool = False
) -> EpisodeState:
    """Wraps externally constructed initial states into an episode."""
    rng = np.random.default_rng(seed)
    levels = draw_levels(len(states), cfg.traffic_model, rng)
    return EpisodeState(
        states=[s.copy() for s in states],
        levels=levels,
        tags=[f"l{l}" for l in levels],
        rng=rng,
        av_index=None,
        collect_log=collect_log,
    )
