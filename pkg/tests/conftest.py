import numpy as np
import pytest

from grid.model import (
    BessCandidate,
    Bus,
    Corridor,
    GridModel,
    LineOption,
    RegulatorCandidate,
    TimeStructure,
)
from grid.scenarios import ScenarioSet

# per-unit netload shape of the toy feeder over its four hours
TOY_SHAPE = np.array([-0.25, 0.5, 0.7, 0.4])
TOY_SHARE = {"b0": 0.0, "b1": 0.1, "b2": 1.0, "b3": 0.5}
TOY_Q_RATIO = 0.3


def toy_model(bess_max=1.0, hours_per_day=4):
    """
    Four buses: b0 (PoI) - b1, then laterals b1 - b2 and b1 - b3.

    Only the head corridor c01 can be reconductored; a BESS can go to b2 and a
    regulator to b3.
    """
    buses = (
        Bus("b0", is_poi=True),
        Bus("b1", peak_mw=0.1),
        Bus("b2", peak_mw=0.5),
        Bus("b3", regulator_candidate=RegulatorCandidate(cost=10.0), peak_mw=0.3),
    )
    corridors = (
        Corridor("c01", "b0", "b1", (
            LineOption("c01-base", cost=0.0, resistance=0.01, reactance=0.01, capacity=1.0, baseline=True),
            LineOption("c01-up", cost=100.0, resistance=0.005, reactance=0.005, capacity=2.0),
        )),
        Corridor("c12", "b1", "b2", (
            LineOption("c12-base", cost=0.0, resistance=0.01, reactance=0.01, capacity=1.5, baseline=True),
        )),
        Corridor("c13", "b1", "b3", (
            LineOption("c13-base", cost=0.0, resistance=0.02, reactance=0.02, capacity=1.5, baseline=True),
        )),
    )
    bess = (BessCandidate("bess-b2", "b2", unit_cost=30.0, max_capacity=bess_max),)
    return GridModel(buses=buses, corridors=corridors, bess_candidates=bess,
                     time=TimeStructure(hours_per_day=hours_per_day), s_base=1.0, name="toy")


def toy_scenarios(model, scales, day_ids=(0,)):
    """One scenario per ``(id, scale)`` pair, every day carrying the same shape."""
    scales = dict(scales)
    bus_ids = tuple(bus.id for bus in model.buses)
    share = np.array([TOY_SHARE[b] for b in bus_ids])
    p = np.stack([
        np.broadcast_to(scale * share[:, None, None] * TOY_SHAPE[None, None, :],
                        (len(bus_ids), len(day_ids), len(TOY_SHAPE)))
        for scale in scales.values()
    ])
    q = TOY_Q_RATIO * np.clip(p, 0.0, None)
    return ScenarioSet(
        scenario_ids=tuple(scales),
        bus_ids=bus_ids,
        time=TimeStructure(hours_per_day=len(TOY_SHAPE), day_ids=tuple(day_ids)),
        netload_p=p,
        netload_q=q,
        labels={sid: {"load_growth_rate": None, "adoption": "toy", "run": None} for sid in scales},
        expected=next(iter(scales)),
    )


def random_feeder(rng, max_binaries=12):
    """
    A random radial feeder on 24-hour days with a few reconductorable
    corridors, one or two regulator candidates and one BESS site.

    Loads stay light enough for the all-upgrade plan to be secure.
    """
    n_bus = int(rng.integers(5, 8))
    parent = [None] + [int(rng.integers(0, i)) for i in range(1, n_bus)]
    peaks = np.r_[0.0, rng.uniform(0.05, 0.15, n_bus - 1)]
    downstream = peaks.copy()
    for i in range(n_bus - 1, 0, -1):
        downstream[parent[i]] += downstream[i]

    n_reg = int(rng.integers(1, 3))
    regulated = set(rng.choice(np.arange(1, n_bus), size=n_reg, replace=False).tolist())
    budget = max_binaries - n_reg
    gated = {}
    for i in rng.permutation(np.arange(1, n_bus)).tolist():
        count = int(rng.integers(2, 4))
        if count > budget:
            continue
        gated[i] = count
        budget -= count

    buses = [Bus("b0", is_poi=True)] + [
        Bus(f"b{i}", peak_mw=float(peaks[i]),
            regulator_candidate=RegulatorCandidate(cost=float(rng.uniform(5.0, 20.0))) if i in regulated else None)
        for i in range(1, n_bus)
    ]
    corridors = []
    for i in range(1, n_bus):
        r, x = rng.uniform(0.002, 0.006, 2)
        if i not in gated:
            options = (LineOption(f"c{i}-base", cost=0.0, resistance=r, reactance=x,
                                  capacity=3.0 * downstream[i], baseline=True),)
        else:
            options = (LineOption(f"c{i}-base", cost=0.0, resistance=r, reactance=x,
                                  capacity=downstream[i] * rng.uniform(0.7, 1.3), baseline=True),)
            options += tuple(
                LineOption(f"c{i}-up{j}", cost=float(rng.uniform(20.0, 100.0)), resistance=r / (j + 1),
                           reactance=x / (j + 1), capacity=downstream[i] * rng.uniform(1.5, 2.5))
                for j in range(1, gated[i])
            )
        corridors.append(Corridor(f"c{i}", f"b{parent[i]}", f"b{i}", options))
    site = int(rng.integers(1, n_bus))
    bess = (BessCandidate(f"bess-b{site}", f"b{site}", unit_cost=30.0, max_capacity=0.5),)
    return GridModel(buses=tuple(buses), corridors=tuple(corridors), bess_candidates=bess,
                     time=TimeStructure(hours_per_day=24), s_base=1.0, name="random")


def daily_netload(peak_mw, load_scale, pv_scale, hours=24):
    """Per-bus hourly netload (bus, hour): an evening-peaking load less a midday PV bell."""
    h = np.arange(hours)
    load = 0.55 + 0.45 * np.exp(-0.5 * ((h - 19) / 2.5) ** 2)
    pv = np.clip(np.sin(np.pi * (h - 6) / 12), 0.0, None)
    return np.asarray(peak_mw)[:, None] * (load_scale * load - pv_scale * pv)[None, :]


def shaped_scenarios(model, cases, day_ids=(0, 1), q_ratio=TOY_Q_RATIO):
    """
    One scenario per ``(id, (load_scale, pv_scale))`` on 24-hour days, the
    first being the expected one. Later days are 5 % lighter.
    """
    cases = dict(cases)
    bus_ids = tuple(bus.id for bus in model.buses)
    peaks = np.array([bus.peak_mw for bus in model.buses])
    p = np.stack([
        np.stack([daily_netload(peaks, load * (1.0 - 0.05 * d), pv) for d in range(len(day_ids))], axis=1)
        for load, pv in cases.values()
    ])
    return ScenarioSet(
        scenario_ids=tuple(cases),
        bus_ids=bus_ids,
        time=TimeStructure(hours_per_day=24, day_ids=tuple(day_ids)),
        netload_p=p,
        netload_q=q_ratio * np.clip(p, 0.0, None),
        labels={sid: {"load_growth_rate": None, "adoption": "shaped", "run": None} for sid in cases},
        expected=next(iter(cases)),
    )



@pytest.fixture
def model():
    return toy_model()


@pytest.fixture
def make_scenarios(model):
    def make(**scales):
        return toy_scenarios(model, scales)
    return make


@pytest.fixture
def two_bus():
    return GridModel(
        buses=(Bus("a", is_poi=True), Bus("b")),
        corridors=(Corridor("ab", "a", "b", (
            LineOption("ab-base", cost=0.0, resistance=0.01, reactance=0.02, capacity=1.0, baseline=True),
        )),),
        time=TimeStructure(hours_per_day=1),
        name="two-bus",
    )
