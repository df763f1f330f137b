"""Level-k planner against the exhaustive scalar enumerator."""

import dataclasses
import math

import numpy as np
import pytest

from intersim.dynamics import (
    DEFAULT_ACTIONS,
    PHASE_APPROACH,
    Pose2,
    VehicleState,
    rollout,
)
from intersim.geometry import single_network
from intersim.planner import (
    DEFAULT_PLANNER,
    PlannerConfig,
    expert_policy,
    level0_plan,
    levelk_plan,
)
from intersim.reward import RewardWeights

from planner_oracle import exhaustive_plan, random_plan_scene


def _check_against_oracle(states, net, i, k, cfg):
    seq, val = exhaustive_plan(states, i, k, net, cfg)
    res = levelk_plan(states, i, k, net, cfg)
    assert res.action_sequence == seq
    assert res.value == pytest.approx(val, rel=1e-9, abs=1e-9)


def test_matches_exhaustive_search_short_horizons():
    rng = np.random.default_rng(42)
    for trial in range(30):
        n_h = 2 + trial % 2
        cfg = dataclasses.replace(DEFAULT_PLANNER, horizon_n=n_h)
        states, net = random_plan_scene(rng)
        i = int(rng.integers(len(states)))
        k = int(rng.integers(3))
        _check_against_oracle(states, net, i, k, cfg)


def test_matches_exhaustive_search_full_horizon():
    rng = np.random.default_rng(1234)
    for trial in range(8):
        states, net = random_plan_scene(rng, n_vehicles=1 + trial % 2)
        i = int(rng.integers(len(states)))
        k = int(rng.integers(3))
        _check_against_oracle(states, net, i, k, DEFAULT_PLANNER)


def _crossing_scene():
    """Two straight-through vehicles on collision course at a four-way."""
    net = single_network("fourway")
    ego = VehicleState(
        Pose2(2.0, -5.0, math.pi / 2), 2.5, goal_ref="I0:N.out", phase=PHASE_APPROACH
    )
    opp = VehicleState(
        Pose2(5.0, 2.0, math.pi), 2.5, goal_ref="I0:W.out", phase=PHASE_APPROACH
    )
    return [ego, opp], net


def test_level_one_yields_at_contested_crossing():
    # Level-1 assumes the other car plows ahead (level-0 disregards it
    # entirely), so it is the cautious rung: it holds speed and brakes
    # rather than fight for the conflict cell. Levels 0 and 2 both push.
    states, net = _crossing_scene()
    plans = {k: levelk_plan(states, 0, k, net) for k in range(3)}
    acc1 = plans[1].first_action.accel
    assert acc1 <= 0.0
    assert plans[1].action_sequence != plans[0].action_sequence
    assert plans[0].first_action.accel > acc1 or plans[0].first_action.omega != 0.0
    assert plans[2].first_action.accel > acc1 or plans[2].first_action.omega != 0.0


def test_ties_resolve_to_lexicographically_first_sequence():
    # With goal and speed weights zeroed, an unobstructed vehicle scores 0
    # for every sequence; first maximum must be all-maintain.
    net = single_network("fourway")
    w = RewardWeights(goal_dist=0.0, speed=0.0)
    cfg = dataclasses.replace(DEFAULT_PLANNER, weights=w)
    ego = VehicleState(Pose2(-10.0, -2.0, 0.0), 2.0, goal_ref="I0:E.out")
    res = levelk_plan([ego], 0, 2, net, cfg)
    assert res.action_sequence == [0, 0, 0, 0]
    assert res.value == 0.0


def test_shared_cache_holds_every_subplan_once():
    states, net = _crossing_scene()
    states = states + [
        VehicleState(Pose2(-2.0, 6.0, -math.pi / 2), 2.0, goal_ref="I0:S.out")
    ]
    cache = {}
    expert_policy(states, 0, 2, net, cache=cache)
    # one k=2 query pulls in both opponents at k=1 and all three at k=0
    assert set(cache) == {(0, 0), (1, 0), (2, 0), (1, 1), (2, 1), (0, 2)}
    for i in range(3):
        for k in (1, 2):
            expert_policy(states, i, k, net, cache=cache)
    assert set(cache) == {(i, k) for i in range(3) for k in range(3)}
    again = expert_policy(states, 0, 2, net, cache=cache)
    assert again is cache[(0, 2)]


def test_far_vehicles_are_ignored():
    net = single_network("fourway")
    ego = VehicleState(Pose2(-12.0, -2.0, 0.0), 3.0, goal_ref="I0:E.out")
    far = VehicleState(Pose2(38.0, -2.0, 0.0), 3.0, goal_ref="I0:E.out")
    solo = levelk_plan([ego], 0, 2, net)
    paired = levelk_plan([ego, far], 0, 2, net)
    assert paired.action_sequence == solo.action_sequence
    assert paired.value == pytest.approx(solo.value)
    assert paired.opp_trajectories == {}


def test_none_slots_are_skipped():
    # despawned vehicles leave None holes in the roster
    states, net = _crossing_scene()
    res_full = levelk_plan([states[0]], 0, 1, net)
    res_holes = levelk_plan([states[0], None], 0, 1, net)
    assert res_holes.action_sequence == res_full.action_sequence


def test_reported_trajectory_replays_the_sequence():
    states, net = _crossing_scene()
    res = levelk_plan(states, 0, 2, net)
    acts = [DEFAULT_ACTIONS[a] for a in res.action_sequence]
    expect = rollout(states[0].pose, states[0].speed, acts)
    assert np.allclose(res.trajectory, expect)
    assert set(res.opp_trajectories) == {1}
    assert res.opp_trajectories[1].shape == (5, 4)


def test_level0_freezes_opponents():
    states, net = _crossing_scene()
    res = level0_plan(states, 0, net)
    tr = res.opp_trajectories[1]
    assert np.all(tr[:, 0] == states[1].pose.x)
    assert np.all(tr[:, 3] == 0.0)


def test_expert_rejects_out_of_range_level():
    states, net = _crossing_scene()
    with pytest.raises(ValueError):
        expert_policy(states, 0, 3, net)
    with pytest.raises(ValueError):
        expert_policy(states, 0, -1, net)


def test_horizon_one_reduces_to_greedy_step():
    cfg = dataclasses.replace(DEFAULT_PLANNER, horizon_n=1)
    rng = np.random.default_rng(99)
    for _ in range(6):
        states, net = random_plan_scene(rng, n_vehicles=2)
        seq, val = exhaustive_plan(states, 0, 1, net, cfg)
        res = levelk_plan(states, 0, 1, net, cfg)
        assert res.action_sequence == seq
        assert len(res.action_sequence) == 1
