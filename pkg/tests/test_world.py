import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from skydrop import world
from skydrop.world import Position, distance

from conftest import load, scenario_doc

coords = st.floats(-1e4, 1e4, allow_nan=False, allow_infinity=False)
positions = st.builds(Position, coords, coords)


def test_distance_identity():
    assert distance(Position(0, 0), Position(0, 0)) == 0


def test_distance_3_4_5():
    assert distance(Position(0, 0), Position(3, 4)) == 5


def test_distance_hand_evaluated():
    # sqrt((4-1)^2 + (5-1)^2) = sqrt(9 + 16) = 5
    assert distance(Position(1, 1), Position(4, 5)) == pytest.approx(5.0)


@given(positions, positions)
def test_distance_symmetric(a, b):
    assert distance(a, b) == distance(b, a)


@given(positions, positions, positions)
def test_distance_triangle_inequality(a, b, c):
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9


def test_negative_altitude_rejected():
    with pytest.raises(world.ValidationError):
        Position(0, 0, -1)


def test_minimal_document_gets_defaults():
    s = load(scenario_doc())
    assert s.params == world.Params()
    assert s.params.cruise_alt_m == 60
    assert s.params.safe_drop_band_m == (4, 8)
    assert s.params.gps_tol_m == 3
    assert s.params.battery_capacity_j == 500_000
    assert s.params.battery_critical_frac == 0.20
    assert s.params.confidence_threshold == 0.85
    assert s.params.max_reattempts == 2
    assert s.params.drag_factor_plain == 1.3
    assert s.params.drag_factor_ballast == 1.0
    assert s.params.g_m_per_s2 == 9.81
    assert len(s.addresses) == 1 and len(s.articles) == 1 and len(s.fleet) == 1


def test_dangling_destination_names_path():
    doc = scenario_doc(articles=[{"id": "p1", "destination": "Z"}])
    with pytest.raises(world.ValidationError) as err:
        load(doc)
    assert "articles[0].destination" in str(err.value)


def test_empty_fleet_rejected():
    with pytest.raises(world.ValidationError) as err:
        load(scenario_doc(fleet=[]))
    assert "fleet" in str(err.value)


def test_malformed_json_is_parse_error():
    with pytest.raises(world.ParseError):
        world.load_scenario("{not json")


def test_negative_dimension_rejected():
    doc = scenario_doc(articles=[{"id": "p1", "destination": "A1", "width_cells": 0}])
    with pytest.raises(world.ValidationError):
        load(doc)


def test_duplicate_address_id_rejected():
    doc = scenario_doc(addresses=[{"id": "A1", "x": 0, "y": 1},
                                  {"id": "A1", "x": 1, "y": 0}])
    with pytest.raises(world.ValidationError):
        load(doc)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**64 - 1), st.floats(0, 10, allow_nan=False),
       st.lists(st.tuples(coords, coords), min_size=1, max_size=4, unique=True))
def test_serialize_round_trip(seed, wind, points):
    doc = scenario_doc(seed=seed, wind={"speed": wind, "direction": 0.5})
    doc["addresses"] = [{"id": f"A{i}", "x": x, "y": y, "contacts": [f"r{i}"]}
                        for i, (x, y) in enumerate(points)]
    doc["articles"] = [{"id": f"p{i}", "destination": f"A{i}"}
                       for i in range(len(points))]
    s = load(doc)
    assert world.load_scenario(world.serialize_scenario(s)) == s


def test_signature_needs_16_components():
    doc = scenario_doc()
    doc["addresses"][0]["signature"] = [1.0, 2.0]
    with pytest.raises(world.ValidationError):
        load(doc)
