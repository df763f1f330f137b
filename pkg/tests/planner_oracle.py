"""Exhaustive scalar reference implementation of the level-k search.

Enumerates every action sequence with itertools, steps states with the
scalar kinematics and scores them with the scalar feature path. Shares no
code with the planner's batched expansion, so agreement between the two is
a real check. Iteration order is lexicographic and ties keep the first
maximum, mirroring the planner's argmax convention.
"""

import itertools
import math

from intersim import dynamics as dyn
from intersim import geometry as geo
from intersim import reward as rw
from intersim.dynamics import Pose2, VehicleState


def exhaustive_plan(states, i, k, network, cfg, cache=None):
    """Returns (action index sequence, value) for vehicle i planning at level k."""
    if cache is None:
        cache = {}
    if (i, k) in cache:
        return cache[(i, k)]
    ego = states[i]
    near = [
        j
        for j in range(len(states))
        if j != i
        and states[j] is not None
        and math.hypot(states[j].pose.x - ego.pose.x, states[j].pose.y - ego.pose.y)
        <= cfg.interaction_radius_m
    ]
    n = cfg.horizon_n
    opp_traj = {}
    for j in near:
        if k == 0:
            opp_traj[j] = [states[j].pose] * (n + 1)
        else:
            sub_seq, _ = exhaustive_plan(states, j, k - 1, network, cfg, cache)
            poses = [states[j].pose]
            p, v = states[j].pose, states[j].speed
            for ai in sub_seq:
                p, v = dyn.step(p, v, cfg.actions[ai], dt=cfg.dt_s, v_max=cfg.v_max)
                poses.append(p)
            opp_traj[j] = poses

    lay, lane = network.resolve(ego.goal_ref)
    ref = lane.ref_point
    may_exit = ego.phase != dyn.PHASE_APPROACH
    best_seq, best_val = None, -math.inf
    for seq in itertools.product(range(len(cfg.actions)), repeat=n):
        p, v = ego.pose, ego.speed
        total, f = 0.0, 1.0
        for tau, ai in enumerate(seq):
            p, v = dyn.step(p, v, cfg.actions[ai], dt=cfg.dt_s, v_max=cfg.v_max)
            others = [opp_traj[j][tau + 1] for j in near]
            exiting = may_exit and not lay.in_core(p.x, p.y)
            fv = rw.features(
                p, v, others, lay, ref, exiting=exiting, target_lane=lane.id, zones=cfg.zones
            )
            total += f * rw.reward(fv, cfg.weights)
            f *= cfg.lam
        if total > best_val:
            best_seq, best_val = list(seq), total
    cache[(i, k)] = (best_seq, best_val)
    return best_seq, best_val


_KINDS = ("fourway", "tshape", "roundabout")


def random_plan_scene(rng, n_vehicles=None):
    """Random joint state on a random single intersection.

    Half the vehicles spawn properly on inbound lanes, the rest are thrown
    anywhere near the core with arbitrary heading and phase, which exercises
    boundary, marking and wrong-lane branches of the feature code.
    """
    kind = _KINDS[rng.integers(len(_KINDS))]
    net = geo.single_network(kind)
    lay = net.layouts["I0"]
    arms = list(lay.arms)
    m = int(n_vehicles if n_vehicles is not None else rng.integers(1, 4))
    states = []
    for _ in range(m):
        entry = arms[rng.integers(len(arms))]
        while True:
            exit_arm = arms[rng.integers(len(arms))]
            if exit_arm != entry or kind == "roundabout":
                break
        targets = [f"I0:{t}" for t in geo.turn_targets(lay, entry, exit_arm)]
        goal, rest = targets[0], targets[1:]
        if rng.random() < 0.5:
            a = lay.arms[entry]
            u = rng.uniform(a.u_start + 2.0, a.u_end - 2.0)
            ux, uy = a.unit_u()
            wx, wy = a.unit_w()
            lw = lay.params["lane_width"]
            x = lay.center[0] + ux * u + wx * 0.5 * lw
            y = lay.center[1] + uy * u + wy * 0.5 * lw
            heading = geo.wrap_angle(a.angle + math.pi)
            phase = dyn.PHASE_APPROACH
        else:
            x = rng.uniform(-18.0, 18.0)
            y = rng.uniform(-18.0, 18.0)
            heading = rng.uniform(-math.pi, math.pi)
            phase = (dyn.PHASE_APPROACH, dyn.PHASE_INSIDE, dyn.PHASE_EXIT)[rng.integers(3)]
        states.append(
            VehicleState(
                Pose2(x, y, heading),
                float(rng.uniform(0.0, 5.0)),
                goal_ref=goal,
                layout_label=lay.label,
                target_lane_seq=rest,
                phase=phase,
            )
        )
    return states, net
