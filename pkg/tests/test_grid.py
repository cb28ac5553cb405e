from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from conftest import toy_model
from grid.errors import ModelValidationError, ScenarioDataError
from grid.hyperplanes import hyperplanes, inside_polygon, polygon_vertices
from grid.io import dump_feeder, load_feeder, parse_feeder, read_scenario_set, write_scenario_set
from grid.model import Corridor, LineOption
from grid.validation import (
    BASELINE,
    BOUNDS,
    DANGLING,
    DUPLICATE,
    NON_RADIAL,
    NONPOSITIVE,
    POI,
    validate,
    validate_scenarios,
)

FEEDER = Path(__file__).resolve().parent.parent / "data" / "feeder24.yaml"


def test_hyperplane_polygon_inside_disk():
    """Every point accepted by the facets lies inside the capacity disk."""
    rng = np.random.default_rng(0)
    capacity = 2.5
    points = rng.uniform(-1.2 * capacity, 1.2 * capacity, size=(10_000, 2))
    for count in (4, 8, 12, 24):
        accepted = points[inside_polygon(points, count, capacity)]
        assert len(accepted) > 0
        assert (np.hypot(accepted[:, 0], accepted[:, 1]) <= capacity + 1e-12).all()


def test_polygon_vertices_on_circle():
    """Vertices sit on the circle and satisfy every facet."""
    for count in (4, 6, 12):
        vertices = polygon_vertices(count, capacity=3.0)
        assert np.allclose(np.hypot(vertices[:, 0], vertices[:, 1]), 3.0)
        assert inside_polygon(vertices, count, 3.0, tol=1e-9).all()


def test_polygon_contains_inscribed_circle():
    """Points just inside radius C cos(pi/J) are accepted in every direction."""
    count = 12
    theta = np.linspace(0.0, 2.0 * np.pi, 721)
    radius = np.cos(np.pi / count) * (1.0 - 1e-9)
    points = radius * np.column_stack([np.cos(theta), np.sin(theta)])
    assert inside_polygon(points, count).all()


def test_hyperplanes_need_four_facets():
    """Fewer than four hyperplanes cannot bound the disk."""
    assert hyperplanes(4).shape == (4, 2)
    with pytest.raises(ValueError):
        hyperplanes(3)


def test_toy_model_is_valid(model):
    """The fixture feeder passes validation and orients from its PoI."""
    assert validate(model).ok
    topo = model.topology
    assert topo.order[0] == "b0"
    assert topo.parent["b2"] == "b1"
    assert topo.path_to_root("b3") == ["b3", "b1", "b0"]
    assert [c.id for c in model.oriented_corridors] == ["c01", "c12", "c13"]


def test_validation_reports_cycle(model):
    """An extra corridor closing a loop breaks radiality."""
    loop = Corridor("c23", "b2", "b3", (
        LineOption("c23-base", cost=0.0, resistance=0.01, reactance=0.01, capacity=1.0, baseline=True),))
    report = validate(replace(model, corridors=model.corridors + (loop,)))
    assert NON_RADIAL in report.kinds()


def test_validation_reports_each_kind(model):
    """Broken references, capacities, baselines, ids, bounds and PoI are all reported."""
    dangling = replace(model.corridors[1], to_bus="nowhere")
    assert DANGLING in validate(replace(model, corridors=(model.corridors[0], dangling, model.corridors[2]))).kinds()

    options = model.corridors[0].options
    zero = replace(model.corridors[0], options=(replace(options[0], capacity=0.0), options[1]))
    assert NONPOSITIVE in validate(replace(model, corridors=(zero,) + model.corridors[1:])).kinds()

    two_base = replace(model.corridors[0], options=(options[0], replace(options[1], baseline=True)))
    assert BASELINE in validate(replace(model, corridors=(two_base,) + model.corridors[1:])).kinds()

    duplicate = replace(model.corridors[2], id="c12")
    assert DUPLICATE in validate(replace(model, corridors=model.corridors[:2] + (duplicate,))).kinds()

    inverted = replace(model.buses[2], vmin_sq=1.1, vmax_sq=0.9)
    buses = model.buses[:2] + (inverted,) + model.buses[3:]
    assert BOUNDS in validate(replace(model, buses=buses)).kinds()

    no_poi = (replace(model.buses[0], is_poi=False),) + model.buses[1:]
    assert POI in validate(replace(model, buses=no_poi)).kinds()


def test_parse_feeder_rejects_unknown_corridor():
    """A line option pointing at a missing corridor is a dangling reference."""
    document = {
        "buses": [{"id": "a", "poi": True}, {"id": "b"}],
        "corridors": [{"id": "ab", "from": "a", "to": "b"}],
        "line_options": [
            {"id": "ab-0", "corridor": "ab", "baseline": True, "r": 0.01, "x": 0.01, "capacity_mva": 1.0},
            {"id": "xy-0", "corridor": "xy", "r": 0.01, "x": 0.01, "capacity_mva": 1.0},
        ],
    }
    _, report = parse_feeder(document)
    assert DANGLING in report.kinds()


def test_feeder_document_round_trip(model, tmp_path):
    """Dumping and reloading a feeder preserves buses, corridors and candidates."""
    path = dump_feeder(model, tmp_path / "toy.yaml")
    loaded = load_feeder(path)
    assert loaded.buses == model.buses
    assert loaded.corridors == model.corridors
    assert loaded.bess_candidates == model.bess_candidates
    assert loaded.time.hours_per_day == 4


def test_feeder_round_trip_keeps_big_m_overrides(model, tmp_path):
    """Per-option and per-regulator big-M overrides survive a dump and reload."""
    corridor = model.corridors[0]
    options = tuple(replace(o, big_m=7.5) for o in corridor.options)
    corridors = (replace(corridor, options=options),) + model.corridors[1:]
    buses = tuple(
        replace(b, regulator_candidate=replace(b.regulator_candidate, big_m=0.25))
        if b.regulator_candidate is not None else b
        for b in model.buses
    )
    overridden = replace(model, buses=buses, corridors=corridors)
    loaded = load_feeder(dump_feeder(overridden, tmp_path / "toy.yaml"))
    assert all(o.big_m == 7.5 for o in loaded.corridors[0].options)
    assert loaded.bus_by_id["b3"].regulator_candidate.big_m == 0.25
    assert loaded.corridors == overridden.corridors
    assert loaded.buses == overridden.buses


def test_load_feeder_raises_on_invalid(tmp_path):
    """An invalid document aborts loading with the full report."""
    path = tmp_path / "bad.yaml"
    path.write_text("buses:\n  - {id: a}\n  - {id: b}\ncorridors: []\n")
    with pytest.raises(ModelValidationError) as info:
        load_feeder(path)
    assert POI in info.value.report.kinds()


def test_bundled_feeder_loads():
    """The shipped 24-bus feeder is valid and radial."""
    feeder = load_feeder(FEEDER)
    assert len(feeder.buses) == 24
    assert len(feeder.corridors) == 23
    assert feeder.poi.id == "b00"
    assert feeder.bus_by_id["b01"].has_existing_regulator
    assert feeder.bus_by_id["b07"].is_regulator_candidate
    assert {b.bus for b in feeder.bess_candidates} == {"b05", "b13"}
    assert len(feeder.topology.order) == 24


def test_scenario_file_round_trip(model, make_scenarios, tmp_path):
    """Netload files keep values, day ids, labels and the expected scenario."""
    scenarios = make_scenarios(low=0.8, high=1.2)
    path = write_scenario_set(scenarios, tmp_path / "scenarios.csv")
    loaded = read_scenario_set(path)
    assert loaded.scenario_ids == ("low", "high")
    assert loaded.expected == "low"
    assert loaded.time.day_ids == (0,)
    assert np.allclose(loaded.netload_p, scenarios.netload_p)
    assert np.allclose(loaded.netload_q, scenarios.netload_q)
    assert validate_scenarios(model, loaded).ok


def test_scenario_file_must_be_dense(make_scenarios, tmp_path):
    """Dropping a row makes the file unreadable."""
    path = write_scenario_set(make_scenarios(nominal=1.0), tmp_path / "scenarios.csv")
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ScenarioDataError):
        read_scenario_set(path)


def test_scenario_file_rejects_hour_past_day_length(make_scenarios, tmp_path):
    """An hour outside the declared day length is a data error, not a crash."""
    path = write_scenario_set(make_scenarios(nominal=1.0), tmp_path / "scenarios.csv")
    with pytest.raises(ScenarioDataError):
        read_scenario_set(path, hours_per_day=2)


def test_scenarios_must_match_feeder_hours(make_scenarios):
    """A feeder with a different day length rejects the scenario set."""
    report = validate_scenarios(toy_model(hours_per_day=24), make_scenarios(nominal=1.0))
    assert not report.ok
