"""Receding-horizon level-k planning over the discrete action table.

A level-0 vehicle treats everyone else as fixed obstacles. A level-k
vehicle commits every nearby opponent to the open-loop sequence a
level-(k-1) planner would choose for them, then picks its own best
N-step sequence by full enumeration of the 6^N tree, evaluated depth by
depth as numpy batches. Only the first action of the winner is executed,
the rest is replanned next tick.

Leaf ordering is node major, so np.argmax (first maximum) selects the
lexicographically smallest tied sequence, with "maintain" first in the
action table. The exhaustive scalar reference in the test suite iterates
in the same order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .dynamics import DEFAULT_ACTIONS, DT_S, V_MAX, Action, ActionSet, VehicleState, rollout
from .dynamics import PHASE_APPROACH
from .geometry import Pose2, RoadNetwork, point_segment_dist, wrap_angle_many
from .reward import DEFAULT_WEIGHTS, DEFAULT_ZONES, RewardWeights, ZoneSpec, features_many


@dataclass(frozen=True)
class PlannerConfig:
    k_max: int = 2
    horizon_n: int = 4
    lam: float = 0.8
    interaction_radius_m: float = 40.0
    dt_s: float = DT_S
    v_max: float = V_MAX
    actions: ActionSet = DEFAULT_ACTIONS
    zones: ZoneSpec = DEFAULT_ZONES
    weights: RewardWeights = DEFAULT_WEIGHTS


DEFAULT_PLANNER = PlannerConfig()


@dataclass
class PlanRequest:
    vehicle: int
    level: int


@dataclass
class PlanResult:
    action_sequence: List[int]
    first_action: Action
    value: float
    trajectory: np.ndarray  # (N+1, 4) rows of x, y, theta, v
    opp_trajectories: Dict[int, np.ndarray] = field(default_factory=dict)


def level0_plan(
    states: List[VehicleState],
    i: int,
    network: RoadNetwork,
    cfg: PlannerConfig = DEFAULT_PLANNER,
) -> PlanResult:
    """Best response against opponents frozen at their current poses."""
    near = _near_indices(states, i, cfg)
    n = cfg.horizon_n
    opp = {}
    for j in near:
        tr = np.empty((n + 1, 4))
        tr[:] = (states[j].pose.x, states[j].pose.y, states[j].pose.theta, 0.0)
        opp[j] = tr
    return _best_response(states[i], opp, network, cfg)


def levelk_plan(
    states: List[VehicleState],
    i: int,
    k: int,
    network: RoadNetwork,
    cfg: PlannerConfig = DEFAULT_PLANNER,
    cache: Optional[Dict[Tuple[int, int], PlanResult]] = None,
) -> PlanResult:
    """Level-k best response. cache maps (vehicle, level) to finished plans
    and is shared across vehicles within one decision tick."""
    if cache is not None and (i, k) in cache:
        return cache[(i, k)]
    if k == 0:
        res = level0_plan(states, i, network, cfg)
    else:
        near = _near_indices(states, i, cfg)
        opp = {}
        for j in near:
            sub = levelk_plan(states, j, k - 1, network, cfg, cache)
            opp[j] = sub.trajectory
        res = _best_response(states[i], opp, network, cfg)
    if cache is not None:
        cache[(i, k)] = res
    return res


def best_response(
    ego: VehicleState,
    opp_trajectories: Dict[int, np.ndarray],
    network: RoadNetwork,
    cfg: PlannerConfig = DEFAULT_PLANNER,
) -> PlanResult:
    """Single-agent receding-horizon search against externally committed
    opponent trajectories, each (N+1, 4). The adaptive controller supplies
    per-opponent predictions here instead of the level recursion."""
    return _best_response(ego, opp_trajectories, network, cfg)


def expert_policy(
    states: List[VehicleState],
    i: int,
    k: int,
    network: RoadNetwork,
    cfg: PlannerConfig = DEFAULT_PLANNER,
    cache: Optional[Dict[Tuple[int, int], PlanResult]] = None,
) -> PlanResult:
    """The game-tree teacher queried during imitation and evaluation."""
    if not 0 <= k <= cfg.k_max:
        raise ValueError(f"level {k} outside 0..{cfg.k_max}")
    return levelk_plan(states, i, k, network, cfg, cache)


def _near_indices(states: List[VehicleState], i: int, cfg: PlannerConfig) -> List[int]:
    ex, ey = states[i].pose.x, states[i].pose.y
    out = []
    for j, st in enumerate(states):
        if j == i or st is None:
            continue
        if math.hypot(st.pose.x - ex, st.pose.y - ey) <= cfg.interaction_radius_m:
            out.append(j)
    return out


def _nearby_segments(segs: np.ndarray, x: float, y: float, radius: float) -> np.ndarray:
    if not len(segs):
        return segs
    keep = [s for s in segs if point_segment_dist((x, y), s[:2], s[2:]) <= radius]
    if not keep:
        return np.zeros((0, 4))
    return np.array(keep)


def _best_response(
    ego: VehicleState,
    opp_trajectories: Dict[int, np.ndarray],
    network: RoadNetwork,
    cfg: PlannerConfig,
) -> PlanResult:
    if ego.goal_ref is None:
        raise ValueError("vehicle has no goal lane")
    lay, lane = network.resolve(ego.goal_ref)
    ref = lane.ref_point
    n = cfg.horizon_n
    dt = cfg.dt_s
    acc, om = cfg.actions.arrays()
    n_act = len(acc)

    # geometry the horizon can possibly touch
    reach = n * cfg.v_max * dt + max(cfg.zones.s_length, cfg.zones.s_width)
    bsegs = _nearby_segments(lay.boundary_segments(), ego.pose.x, ego.pose.y, reach)
    msegs = _nearby_segments(lay.marking_segments(), ego.pose.x, ego.pose.y, reach)
    lane_rects = lay.straight_lane_rects()
    may_exit = ego.phase != PHASE_APPROACH

    opp = list(opp_trajectories.values())
    opp_arr = np.stack([t[:, :3] for t in opp]) if opp else np.zeros((0, n + 1, 3))
    w_arr = cfg.weights.as_array()

    X = np.array([ego.pose.x])
    Y = np.array([ego.pose.y])
    TH = np.array([ego.pose.theta])
    V = np.array([ego.speed])
    value = np.zeros(1)
    disc = 1.0
    for tau in range(n):
        B = X.shape[0]
        X = np.repeat(X, n_act)
        Y = np.repeat(Y, n_act)
        TH = np.repeat(TH, n_act)
        V = np.repeat(V, n_act)
        value = np.repeat(value, n_act)
        a = np.tile(acc, B)
        w = np.tile(om, B)
        X = X + V * np.cos(TH) * dt
        Y = Y + V * np.sin(TH) * dt
        V = np.clip(V + a * dt, 0.0, cfg.v_max)
        TH = wrap_angle_many(TH + w * dt)
        if may_exit:
            exiting = ~_in_core_many(lay, X, Y)
        else:
            exiting = np.zeros(X.shape[0], dtype=bool)
        fv = features_many(
            X, Y, TH, V, opp_arr[:, tau + 1, :], bsegs, msegs, lane_rects, lane.id, exiting, ref, cfg.zones
        )
        value = value + disc * (fv @ w_arr)
        disc *= cfg.lam

    best = int(np.argmax(value))
    seq = []
    idx = best
    for _ in range(n):
        seq.append(idx % n_act)
        idx //= n_act
    seq.reverse()
    actions = [cfg.actions[i] for i in seq]
    traj = rollout(ego.pose, ego.speed, actions, dt=dt, v_max=cfg.v_max)
    return PlanResult(
        action_sequence=seq,
        first_action=actions[0],
        value=float(value[best]),
        trajectory=traj,
        opp_trajectories=opp_trajectories,
    )


def _in_core_many(lay, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    cx, cy = lay.center
    if lay.core["type"] == "box":
        h = lay.core["half"]
        return (np.abs(x - cx) <= h) & (np.abs(y - cy) <= h)
    dx, dy = x - cx, y - cy
    return dx * dx + dy * dy <= lay.core["r"] ** 2
