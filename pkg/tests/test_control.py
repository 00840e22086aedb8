"""Unsignalized FCFS reservations, signal programs, RV commands."""

import math

import numpy as np
import pytest

from intersim import control, demand, dynamics, net
from intersim.control import (
    GO,
    GREEN,
    RED,
    STOP,
    YELLOW,
    MixedController,
    SignalController,
    UnsignalizedController,
    signal_program,
)
from intersim.dynamics import IdmParams, Phase

from conftest import inject_vehicle, make_world, run_steps

P = IdmParams()


# -- unsignalized FCFS -----------------------------------------------------------


def test_single_vehicle_never_stops(wgg_model):
    rec = demand.VehicleRecord(0, 0.0, "EB_in_1", "EB_out_0")
    world = make_world(wgg_model, [rec], controller=UnsignalizedController(wgg_model),
                       duration=60.0)
    min_speed = math.inf
    for _ in range(400):
        world.step()
        for v in world.active.values():
            if v.phase is not Phase.QUEUED:
                min_speed = min(min_speed, v.speed)
        if world.done:
            break
    assert world.done, "vehicle should finish"
    assert min_speed > 10.0


def test_two_perpendicular_straights_fcfs_order(wgg_model):
    recs = [
        demand.VehicleRecord(0, 0.0, "EB_in_1", "EB_out_0"),
        demand.VehicleRecord(1, 1.0, "NB_in_1", "NB_out_1"),
    ]
    ctrl = UnsignalizedController(wgg_model)
    world = make_world(wgg_model, recs, controller=ctrl, duration=90.0)
    run_steps(world, 900)
    assert len(world.done) == 2
    exits = {v.vehicle_id: v.exit_actual for v in world.done}
    assert exits[0] < exits[1]
    grant_order = [vid for _, vid, _ in ctrl.state.grant_log]
    assert grant_order == [0, 1]


def test_four_simultaneous_straights_serve_in_nesw_order(wgg_model):
    recs = [
        demand.VehicleRecord(0, 0.0, "WB_in_1", "WB_out_0"),
        demand.VehicleRecord(1, 0.0, "SB_in_1", "SB_out_1"),
        demand.VehicleRecord(2, 0.0, "EB_in_1", "EB_out_0"),
        demand.VehicleRecord(3, 0.0, "NB_in_1", "NB_out_1"),
    ]
    ctrl = UnsignalizedController(wgg_model)
    world = make_world(wgg_model, recs, controller=ctrl, duration=120.0)
    run_steps(world, 1200)
    assert len(world.done) == 4
    order = [vid for _, vid, _ in ctrl.state.grant_log]
    assert order == [3, 2, 1, 0], "tie-break must serve N, E, S, W"


def test_fcfs_grant_log_times_nondecreasing(wgg_model):
    targets = demand.DirectionalDemand.of(nb=10, sb=10, eb=15, wb=15)
    mix = {a: {net.TurnType.LEFT: 0.2, net.TurnType.STRAIGHT: 0.6,
               net.TurnType.RIGHT: 0.2} for a in net.Approach}
    scn = demand.synthesize_demand(targets, mix, 120.0, 31, wgg_model)
    ctrl = UnsignalizedController(wgg_model)
    world = dynamics.World(wgg_model, scn,
                           dynamics.SimConfig(dt=0.1, duration=120.0, drain_s=240.0), ctrl)
    world.run()
    times = [t for t, _, _ in ctrl.state.grant_log]
    assert times == sorted(times)
    assert len(world.done) == len(scn.records)
    assert world.conflict_events == 0


def test_unsignalized_decide_wrapper(wgg_model):
    rec = demand.VehicleRecord(0, 0.0, "EB_in_1", "EB_out_0")
    world = make_world(wgg_model, [rec], duration=30.0)
    world.step()
    res = control.ReservationState()
    directives = control.unsignalized_decide(res, world, wgg_model)
    assert isinstance(directives, dict)


# -- signal programs --------------------------------------------------------------


def test_wgg_cycle_length_is_sum_of_phase_list():
    prog = signal_program("WGG")
    durations = [p.duration for p in prog.phases]
    assert durations == [7, 4, 29, 4, 20, 4, 4, 40, 4]
    assert prog.cycle_length == sum(durations) == 116.0


def test_wgm_cycle_length_is_sum_of_phase_list():
    prog = signal_program("WGM")
    durations = [p.duration for p in prog.phases]
    assert durations == [22, 4, 80, 4, 42, 4, 4, 113, 4]
    assert prog.cycle_length == sum(durations) == 277.0


def test_phase_durations_within_published_set():
    allowed = {4, 7, 20, 22, 29, 40, 42, 80, 113}
    for name in ("WGG", "WGM"):
        for p in signal_program(name).phases:
            assert p.duration in allowed


@pytest.mark.parametrize("name", ["WGG", "WGM"])
def test_signal_periodicity_over_ten_cycles(name):
    prog = signal_program(name)
    model = net.build_intersection(name)
    cycle = prog.cycle_length
    for t in np.linspace(0.0, cycle - 1e-6, 97):
        base = {m.id: prog.color_at(t, m.id) for m in model.movements}
        for k in range(1, 11):
            later = {m.id: prog.color_at(t + k * cycle, m.id) for m in model.movements}
            assert later == base


@pytest.mark.parametrize("name", ["WGG", "WGM"])
def test_no_phase_greens_conflicting_movements(name):
    prog = signal_program(name)
    model = net.build_intersection(name)
    for phase in prog.phases:
        greens = sorted(phase.greens())
        for i, a in enumerate(greens):
            for b in greens[i + 1:]:
                assert not model.conflicts.conflicts(a, b), (a, b)


def test_every_movement_has_a_color_each_phase():
    prog = signal_program("WGG")
    model = net.build_intersection("WGG")
    for phase in prog.phases:
        for m in model.movements:
            assert phase.color(m.id) in (GREEN, YELLOW, RED)


def test_rights_green_during_their_left_phase():
    prog = signal_program("WGG")
    left_phase = prog.phases[2]  # east-west protected lefts
    assert left_phase.color("EB_L") == GREEN
    assert left_phase.color("EB_R") == GREEN
    assert left_phase.color("WB_R") == GREEN
    assert left_phase.color("NB_S") == RED


def test_phase_zero_active_at_t_zero():
    prog = signal_program("WGG")
    assert prog.phase_at(0.0) is prog.phases[0]
    assert prog.phase_at(6.99) is prog.phases[0]
    assert prog.phase_at(7.01) is prog.phases[1]


# -- signal stop behaviour ----------------------------------------------------------


def test_red_light_stops_vehicle(wgg_model):
    prog = signal_program("WGG")
    rec = demand.VehicleRecord(0, 0.0, "NB_in_1", "NB_out_1")  # red until t=44
    world = make_world(wgg_model, [rec], controller=SignalController(wgg_model, prog),
                       duration=120.0)
    run_steps(world, 400)  # t = 40, still red for NB
    v = list(world.active.values())[0]
    assert v.phase is Phase.APPROACHING
    assert v.speed < 0.1
    assert abs(v.position - v.stop_line) < 1.0
    assert v.waiting_accum > 10.0
    run_steps(world, 800)  # green phase reached; vehicle clears
    assert world.done and world.done[0].exit_actual is not None


def test_dilemma_zone_vehicle_proceeds(wgg_model):
    prog = signal_program("WGG")
    ctrl = SignalController(wgg_model, prog)
    world = make_world(wgg_model, [], controller=ctrl, duration=60.0)
    world.time = 44.5  # NB_S red at this moment? actually green; use WB red
    rec = demand.VehicleRecord(0, 0.0, "WB_in_1", "WB_out_0")
    v = inject_vehicle(world, rec, position=145.0, speed=12.0)  # 3 m from line
    # required decel = 144 / (2*3) = 24 m/s^2 > b: must not be told to stop
    directives = ctrl.decide(world)
    assert 0 not in directives
    slow = inject_vehicle(
        world, demand.VehicleRecord(1, 0.0, "WB_in_1", "WB_out_0"),
        position=100.0, speed=12.0)
    directives = ctrl.decide(world)
    assert 1 in directives  # 48 m out: can stop comfortably


def test_comfortable_stop_threshold_example():
    # 5 m from the line at 12 m/s: required decel 14.4 exceeds b
    assert 12.0 ** 2 / (2 * 5.0) == pytest.approx(14.4)
    assert 14.4 > P.b


# -- RV command layer ---------------------------------------------------------------


class _StubPolicy:
    def __init__(self, action):
        self.action = action

    def greedy_action(self, obs):
        return self.action


def test_rv_decide_stop_formula(wgg_model):
    rec = demand.VehicleRecord(0, 0.0, "EB_in_1", "EB_out_0", vclass="RV")
    world = make_world(wgg_model, [], duration=10.0)
    rv = inject_vehicle(world, rec, position=130.0, speed=10.0)  # 20 m from box
    a = control.rv_decide(_StubPolicy(STOP), rv, None, wgg_model, P)
    assert a == pytest.approx(-2.5)


def test_rv_decide_zero_speed(wgg_model):
    rec = demand.VehicleRecord(0, 0.0, "EB_in_1", "EB_out_0", vclass="RV")
    world = make_world(wgg_model, [], duration=10.0)
    rv = inject_vehicle(world, rec, position=130.0, speed=0.0)
    assert control.rv_decide(_StubPolicy(STOP), rv, None, wgg_model, P) == 0.0


def test_rv_decide_outside_zone_returns_none(wgg_model):
    rec = demand.VehicleRecord(0, 0.0, "EB_in_1", "EB_out_0", vclass="RV")
    world = make_world(wgg_model, [], duration=10.0)
    rv = inject_vehicle(world, rec, position=105.0, speed=10.0)  # 45 m out
    assert control.rv_decide(_StubPolicy(STOP), rv, None, wgg_model, P) is None
    assert control.rv_decide(_StubPolicy(GO), rv, None, wgg_model, P) is None


def test_rv_decide_go_returns_max_accel(wgg_model):
    rec = demand.VehicleRecord(0, 0.0, "EB_in_1", "EB_out_0", vclass="RV")
    world = make_world(wgg_model, [], duration=10.0)
    rv = inject_vehicle(world, rec, position=130.0, speed=5.0)
    assert control.rv_decide(_StubPolicy(GO), rv, None, wgg_model, P) == P.a_max


def test_stop_command_halts_rv_at_box(wgg_model):
    rec = demand.VehicleRecord(0, 0.0, "EB_in_1", "EB_out_0", vclass="RV")
    ctrl = MixedController(wgg_model, action_fn=lambda world, rv: STOP)
    world = make_world(wgg_model, [rec], controller=ctrl, duration=60.0)
    run_steps(world, 500)
    v = list(world.active.values())[0]
    assert v.phase is Phase.APPROACHING
    assert v.speed < 0.2
    assert v.position <= v.b1 + 1e-6
    assert v.position > v.b1 - 6.0


def test_stop_command_withdraws_claim_for_cross_traffic(wgg_model):
    # RV told to stop; a later-arriving crossing HV must still be served
    def actions(world, rv):
        return STOP

    recs = [
        demand.VehicleRecord(0, 0.0, "EB_in_1", "EB_out_0", vclass="RV"),
        demand.VehicleRecord(1, 2.0, "NB_in_1", "NB_out_1", vclass="HV"),
    ]
    ctrl = MixedController(wgg_model, action_fn=actions)
    world = make_world(wgg_model, recs, controller=ctrl, duration=90.0)
    run_steps(world, 900)
    done_ids = {v.vehicle_id for v in world.done}
    assert 1 in done_ids, "crossing HV must pass the stopped RV"
    assert 0 not in done_ids, "stopped RV holds at the line"


def test_go_rv_proceeds_normally(wgg_model):
    recs = [demand.VehicleRecord(0, 0.0, "EB_in_1", "EB_out_0", vclass="RV")]
    ctrl = MixedController(wgg_model, action_fn=lambda world, rv: GO)
    world = make_world(wgg_model, recs, controller=ctrl, duration=60.0)
    run_steps(world, 500)
    assert world.done


def test_mixed_without_rvs_equals_unsignalized(wgg_model):
    from intersim.metrics import summarize_world

    targets = demand.DirectionalDemand.of(nb=8, eb=12, sb=6, wb=9)
    mix = {a: {net.TurnType.LEFT: 0.2, net.TurnType.STRAIGHT: 0.6,
               net.TurnType.RIGHT: 0.2} for a in net.Approach}
    scn = demand.synthesize_demand(targets, mix, 120.0, 13, wgg_model)
    cfg = dynamics.SimConfig(dt=0.1, duration=120.0, drain_s=240.0)

    called = []

    def action_fn(world, rv):
        called.append(rv.vehicle_id)
        return GO

    w1 = dynamics.World(wgg_model, scn, cfg, MixedController(wgg_model, action_fn))
    w1.run()
    w2 = dynamics.World(wgg_model, scn, cfg, UnsignalizedController(wgg_model))
    w2.run()
    assert not called, "policy must never be queried without RVs"
    assert summarize_world(w1) == summarize_world(w2)
