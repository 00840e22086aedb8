"""Car-following law, spawning, and integrator properties."""

import math

import numpy as np
import pytest

from intersim import demand, dynamics, net
from intersim.dynamics import IdmParams, Phase, SimConfig, idm_accel, stop_command_accel
from intersim.errors import NonPositiveGap

from conftest import inject_vehicle, make_world, run_steps

P = IdmParams()


# -- idm_accel ----------------------------------------------------------------


def test_free_flow_equilibrium_is_exactly_zero():
    assert idm_accel(math.inf, P.v0, P.v0, P) == 0.0


def test_standstill_at_minimum_gap_is_exactly_zero():
    assert idm_accel(P.s0, 0.0, 0.0, P) == 0.0


def test_idm_value_against_independent_evaluation():
    # oracle: one-shot evaluation of the published car-following law
    p = IdmParams(v0=15, T=1, a_max=2, b=2, delta=4, s0=2, veh_len=5)
    v, v_lead, gap = 10.0, 5.0, 20.0
    s_star = p.s0 + max(0.0, v * p.T + v * (v - v_lead) / (2 * math.sqrt(p.a_max * p.b)))
    expected = p.a_max * (1 - (v / p.v0) ** p.delta - (s_star / gap) ** 2)
    assert expected == pytest.approx(-1.3963117283950617, rel=1e-12)
    assert idm_accel(gap, v, v_lead, p) == pytest.approx(expected, rel=1e-12)


def test_nonpositive_gap_raises():
    with pytest.raises(NonPositiveGap):
        idm_accel(0.0, 5.0, 5.0, P)
    with pytest.raises(NonPositiveGap):
        idm_accel(-2.0, 5.0, 5.0, P)


def test_accel_bounded():
    for gap in (0.5, 2.0, 10.0, 100.0, math.inf):
        for v in (0.0, 5.0, 13.9, 15.0):
            a = idm_accel(gap, v, 0.0, P)
            assert -P.b_emergency <= a <= P.a_max


def test_emergency_clamp_engages_in_degenerate_gap():
    assert idm_accel(0.2, 13.9, 0.0, P) == -P.b_emergency


# -- free-flow convergence -----------------------------------------------------


def _reference_speed(duration, dt, p=P):
    v = 0.0
    for _ in range(int(duration / dt)):
        v = max(0.0, v + p.a_max * (1 - (v / p.v0) ** p.delta) * dt)
    return v


def test_free_flow_convergence_to_desired_speed(wgg_model):
    rec = demand.VehicleRecord(0, 0.0, "EB_in_1", "EB_out_0")
    world = make_world(wgg_model, [rec], duration=60.0, drain_s=0.0)
    run_steps(world, 300)
    v = (list(world.active.values()) + world.done)[0]
    assert abs(v.speed - P.v0) / P.v0 < 0.01
    # cross-check against a fine-step reference integration
    ref = _reference_speed(30.0, 0.001)
    assert abs(v.speed - ref) / ref < 0.01


# -- platoon safety -------------------------------------------------------------


def test_platoon_follower_gap_never_collapses():
    """Leader brakes to a stop; follower must keep gap > 0 and >= s0/2."""
    for gap0 in (6.0, 10.0, 20.0, 35.0, 50.0):
        for v0 in (5.0, 9.0, 13.9):
            lead_pos, lead_v = gap0 + P.veh_len, v0
            foll_pos, foll_v = 0.0, v0
            min_gap = math.inf
            for _ in range(600):
                lead_v = max(0.0, lead_v - 3.0 * 0.1)
                lead_pos += lead_v * 0.1
                gap = lead_pos - P.veh_len - foll_pos
                a = idm_accel(gap, foll_v, lead_v, P)
                foll_v = max(0.0, foll_v + a * 0.1)
                foll_pos += foll_v * 0.1
                min_gap = min(min_gap, lead_pos - P.veh_len - foll_pos)
            assert min_gap > 0.0, (gap0, v0)
            assert min_gap >= P.s0 / 2, (gap0, v0)


# -- spawning -------------------------------------------------------------------


def test_spawn_on_empty_lane_is_exact(wgg_model):
    rec = demand.VehicleRecord(7, 12.3, "EB_in_1", "EB_out_0")
    world = make_world(wgg_model, [rec], duration=60.0)
    run_steps(world, 200)
    v = (list(world.active.values()) + world.done)[0]
    assert v.entry_actual == pytest.approx(12.3, abs=0.051)
    assert abs(v.entry_actual - v.entry_time) <= 0.1


def test_spawn_on_saturated_lane_is_late(wgg_model):
    recs = [demand.VehicleRecord(i, 0.0, "EB_in_1", "EB_out_0") for i in range(40)]
    world = make_world(wgg_model, recs, duration=120.0)
    run_steps(world, 50)
    late = [v for v in world.active.values() if v.entry_actual > v.entry_time]
    assert late, "a stacked spawn queue must delay insertions"
    assert world._spawn_queues.get("EB_in_1"), "tail of the queue still waiting"


# -- step properties -------------------------------------------------------------


def test_empty_world_step_is_noop(wgg_model):
    world = make_world(wgg_model, [], duration=10.0)
    run_steps(world, 5)
    assert world.active == {} and world.done == []
    assert world.time == pytest.approx(0.5)


def test_speed_nonnegative_and_no_teleport(wgg_model):
    targets = demand.DirectionalDemand.of(nb=8, sb=8, eb=12, wb=12)
    mix = {a: {net.TurnType.LEFT: 0.25, net.TurnType.STRAIGHT: 0.5,
               net.TurnType.RIGHT: 0.25} for a in net.Approach}
    scn = demand.synthesize_demand(targets, mix, 120.0, 11, wgg_model)
    from intersim.control import UnsignalizedController

    world = dynamics.World(wgg_model, scn, SimConfig(dt=0.1, duration=120.0, drain_s=200.0),
                           UnsignalizedController(wgg_model))
    bound = (P.v0 + P.a_max * 0.1) * 0.1 + 1e-9
    prev = {}
    while world.time < 180.0 and (world.active or world._pending()):
        world.step()
        for vid, v in world.active.items():
            assert v.speed >= 0.0
            if vid in prev:
                delta = v.position - prev[vid]
                assert 0.0 <= delta <= bound
        prev = {vid: v.position for vid, v in world.active.items()}


def test_deterministic_trajectories(wgg_model):
    targets = demand.DirectionalDemand.of(nb=5, eb=10)
    mix = {net.Approach.NB: {net.TurnType.STRAIGHT: 1.0},
           net.Approach.EB: {net.TurnType.STRAIGHT: 1.0}}
    scn = demand.synthesize_demand(targets, mix, 60.0, 3, wgg_model)
    from intersim.control import UnsignalizedController

    logs = []
    for _ in range(2):
        world = dynamics.World(
            wgg_model, scn,
            SimConfig(dt=0.1, duration=60.0, drain_s=120.0, record_trajectories=True),
            UnsignalizedController(wgg_model),
        )
        world.run()
        logs.append(world.trajectory)
    assert logs[0] == logs[1]


def test_integrator_consistency_under_dt_halving(wgg_model):
    targets = demand.DirectionalDemand.of(nb=6, sb=6, eb=10, wb=10)
    mix = {a: {net.TurnType.LEFT: 0.2, net.TurnType.STRAIGHT: 0.6,
               net.TurnType.RIGHT: 0.2} for a in net.Approach}
    scn = demand.synthesize_demand(targets, mix, 180.0, 23, wgg_model)
    from intersim.control import UnsignalizedController
    from intersim.metrics import summarize_world

    results = []
    for dt in (0.1, 0.05):
        world = dynamics.World(wgg_model, scn,
                               SimConfig(dt=dt, duration=180.0, drain_s=300.0),
                               UnsignalizedController(wgg_model))
        world.run()
        results.append(summarize_world(world).avg_travel_time)
    assert abs(results[0] - results[1]) / results[1] < 0.02


# -- stop command law ------------------------------------------------------------


def test_stop_command_zero_speed_is_zero():
    assert stop_command_accel(0.0, 15.0, P) == 0.0


def test_stop_command_matches_closed_form():
    assert stop_command_accel(10.0, 20.0, P) == pytest.approx(-2.5)


def test_stop_command_degenerate_distance_uses_emergency_brake():
    assert stop_command_accel(8.0, 0.05, P) == -P.b_emergency


def test_stop_command_halts_at_target():
    # semi-implicit Euler never overshoots this law; it halts on the target
    for u0, d in ((2.0, 5.0), (13.9, 12.0), (20.0, 5.0), (20.0, 30.0)):
        x, u = 0.0, u0
        for _ in range(4000):
            a = stop_command_accel(u, d - x, P)
            u = max(0.0, u + a * 0.1)
            x += u * 0.1
            if u < 1e-9:
                break
        assert d - 1e-6 <= x <= d + 0.5, (u0, d, x)
