"""Intersection model construction, conflicts, and serialization."""

import itertools

import pytest

from intersim import control, net
from intersim.errors import NoSuchMovement, UnknownMovement


@pytest.fixture(scope="module")
def wgg():
    return net.build_intersection("WGG")


@pytest.fixture(scope="module")
def wgm():
    return net.build_intersection("WGM")


def test_wgg_has_four_approaches_with_all_turns(wgg):
    by_approach = {}
    for m in wgg.movements:
        approach = wgg.lane(m.origin).approach
        by_approach.setdefault(approach, set()).add(m.turn)
    assert set(by_approach) == set(net.Approach)
    for turns in by_approach.values():
        assert turns == {net.TurnType.LEFT, net.TurnType.STRAIGHT, net.TurnType.RIGHT}


def test_perpendicular_straights_conflict(wgg):
    assert net.conflicts(wgg, "EB_S0", "NB_S")
    assert net.conflicts(wgg, "EB_S1", "NB_S")
    assert net.conflicts(wgg, "WB_S0", "SB_S")


def test_right_turn_clears_opposing_straight(wgg):
    assert not net.conflicts(wgg, "EB_R", "WB_S0")
    assert not net.conflicts(wgg, "EB_R", "WB_S1")


def test_opposing_left_and_straight_conflict(wgg):
    assert net.conflicts(wgg, "NB_L", "SB_S")
    assert net.conflicts(wgg, "SB_L", "NB_S")


def test_self_conflict_is_false(wgg):
    for m in wgg.movements:
        assert not net.conflicts(wgg, m.id, m.id)


def test_unknown_movement_rejected(wgg):
    with pytest.raises(UnknownMovement):
        net.conflicts(wgg, "EB_S0", "nope")


@pytest.mark.parametrize("name", ["WGG", "WGM"])
def test_matrix_symmetric_and_lengths_positive(name):
    model = net.build_intersection(name)
    for a, b in itertools.product(model.movements, repeat=2):
        assert model.conflicts.conflicts(a.id, b.id) == model.conflicts.conflicts(b.id, a.id)
    for m in model.movements:
        assert m.internal_length > 0


@pytest.mark.parametrize("name", ["WGG", "WGM"])
def test_same_approach_never_conflicts(name):
    model = net.build_intersection(name)
    for a, b in itertools.combinations(model.movements, 2):
        if model.lane(a.origin).approach is model.lane(b.origin).approach:
            assert not model.conflicts.conflicts(a.id, b.id)


def test_movement_of_resolves_straight(wgg):
    m = net.movement_of(wgg, "EB_in_1", "EB_out_0")
    assert m.turn is net.TurnType.STRAIGHT


def test_movement_of_rejects_entry_to_entry(wgg):
    with pytest.raises(NoSuchMovement):
        net.movement_of(wgg, "EB_in_1", "EB_in_0")


def test_movement_of_rejects_illegal_pair(wgg):
    with pytest.raises(NoSuchMovement):
        net.movement_of(wgg, "EB_in_0", "SB_out_1")


@pytest.mark.parametrize("name", ["WGG", "WGM"])
def test_every_lane_reachable(name):
    model = net.build_intersection(name)
    for lane in model.entry_lanes():
        assert model.movements_from(lane.id), f"{lane.id} has no movement"
    destinations = {m.destination for m in model.movements}
    for lane in model.exit_lanes():
        assert lane.id in destinations, f"{lane.id} has no inbound movement"


def test_wgm_skew_lengthens_crossing_movements(wgg, wgm):
    wgg_straight = net.movement_of(wgg, "EB_in_1", "EB_out_0").internal_length
    wgm_straight = net.movement_of(wgm, "EB_in_1", "EB_out_0").internal_length
    assert wgm_straight > wgg_straight
    wgg_left = net.movement_of(wgg, "EB_in_0", "NB_out_0").internal_length
    wgm_left = net.movement_of(wgm, "EB_in_0", "NB_out_0").internal_length
    assert wgm_left > wgg_left


@pytest.mark.parametrize("name", ["WGG", "WGM"])
def test_build_is_deterministic(name):
    a = net.serialize_description(net.build_intersection(name))
    b = net.serialize_description(net.build_intersection(name))
    assert a == b


@pytest.mark.parametrize("name", ["WGG", "WGM"])
def test_generator_matches_bundled_file(name):
    """The committed description files are exactly what the layout
    generator produces."""
    from importlib import resources

    model = net.generate_builtin(name)
    rows = control.canonical_phases(model, control.PROGRAM_DURATIONS[name])
    text = net.serialize_description(model, rows)
    ref = resources.files("intersim.data").joinpath(f"{name.lower()}.intersection")
    assert ref.read_text(encoding="utf-8") == text


def test_description_round_trip(tmp_path, wgm):
    path = tmp_path / "wgm.intersection"
    net.save_description(wgm, path)
    loaded, phases = net.load_description(path)
    assert phases == []
    assert net.serialize_description(loaded) == net.serialize_description(wgm)
    assert loaded.conflicts == wgm.conflicts


def test_conflict_windows_within_paths(wgm):
    for a, b in wgm.conflicts.pairs():
        (alo, ahi), (blo, bhi) = wgm.conflicts.intervals(a, b)
        assert 0.0 <= alo <= ahi <= 1.0
        assert 0.0 <= blo <= bhi <= 1.0
