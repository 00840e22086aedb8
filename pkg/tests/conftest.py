"""Shared fixtures and world-building helpers."""

import pytest

from intersim import demand, dynamics, net


@pytest.fixture(scope="session")
def wgg_model():
    return net.build_intersection("WGG")


@pytest.fixture(scope="session")
def wgm_model():
    return net.build_intersection("WGM")


def make_world(model, records=(), controller=None, dt=0.1, duration=300.0,
               drain_s=300.0, **cfg_kw):
    scenario = demand.Scenario(
        name="test", model=model, records=tuple(records),
        duration=max(duration, max((r.entry_time for r in records), default=0.0)),
    )
    cfg = dynamics.SimConfig(dt=dt, duration=duration, drain_s=drain_s, **cfg_kw)
    return dynamics.World(model, scenario, cfg, controller)


def inject_vehicle(world, record, position, speed, phase=dynamics.Phase.APPROACHING):
    """Place a vehicle directly into a world at a route position."""
    veh = world._make_vehicle(record)
    veh.position = position
    veh.speed = speed
    veh.phase = phase
    veh.entry_actual = world.time
    world.active[veh.vehicle_id] = veh
    world.rebuild_order()
    return veh


def run_steps(world, n):
    for _ in range(n):
        world.step()
    return world
