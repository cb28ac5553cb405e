import logging
from dataclasses import dataclass

import numpy as np

from adoption.bass import DEFAULT_HORIZON
from adoption.ensemble import DEFAULT_ENSEMBLE_SIZE, SELECTIONS
from grid.model import TimeStructure
from grid.scenarios import ScenarioSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GrowthScenarioSpec:
    load_growth_rates: tuple[float, ...] = (0.02, 0.03, 0.04)
    adoption_selection: tuple[str, ...] = SELECTIONS
    ensemble_size: int = DEFAULT_ENSEMBLE_SIZE

    def __post_init__(self):
        object.__setattr__(self, "load_growth_rates", tuple(float(r) for r in self.load_growth_rates))
        object.__setattr__(self, "adoption_selection", tuple(self.adoption_selection))
        if self.ensemble_size < 3:
            raise ValueError("ensemble_size must be at least 3")
        if not self.load_growth_rates or min(self.load_growth_rates) < 0:
            raise ValueError("load growth rates must be a non-empty list of fractions >= 0")
        unknown = set(self.adoption_selection) - set(SELECTIONS)
        if unknown:
            raise ValueError(f"unknown adoption selections {sorted(unknown)}")

    @property
    def medium_rate(self):
        rates = sorted(self.load_growth_rates)
        return rates[(len(rates) - 1) // 2]


def scenario_id(rate, tag):
    return f"g{rate * 100:g}-{tag}"


def scenario_netload(base, bus_ids, rate, pv_kw, horizon=DEFAULT_HORIZON):
    """
    Full-year netload (bus, day, hour) in MW for one growth rate and PV build-out.

    PV runs at unity power factor, so only the active part is offset.
    """
    rows = base.bus_rows(bus_ids)
    growth = (1.0 + rate) ** horizon
    pv_mw = np.array([pv_kw.get(b, 0.0) for b in bus_ids]) / 1000.0
    p = base.load_p[rows] * growth - pv_mw[:, None, None] * base.pv_profile[None]
    q = base.load_q[rows] * growth
    return p, q


def representative_days(netload_p):
    """
    Positions of the day holding the largest aggregate netload hour and of
    the day holding the most negative one.
    """
    aggregate = netload_p.sum(axis=0)
    peak_day = int(np.argmax(aggregate.max(axis=1)))
    reverse_day = int(np.argmin(aggregate.min(axis=1)))
    return peak_day, reverse_day


def _assemble(model, base, cases, horizon, day_ids, expected):
    bus_ids = tuple(bus.id for bus in model.buses)
    if day_ids is None:
        positions = set()
        for _, rate, pv_kw, _ in cases:
            p, _ = scenario_netload(base, bus_ids, rate, pv_kw, horizon)
            positions.update(representative_days(p))
        positions = sorted(positions)
        day_ids = tuple(base.day_ids[i] for i in positions)
        logger.info("Representative days: %s", ", ".join(str(d) for d in day_ids))
    else:
        day_pos = {d: i for i, d in enumerate(base.day_ids)}
        positions = [day_pos[d] for d in day_ids]

    netload_p, netload_q = [], []
    for _, rate, pv_kw, _ in cases:
        p, q = scenario_netload(base, bus_ids, rate, pv_kw, horizon)
        netload_p.append(p[:, positions])
        netload_q.append(q[:, positions])

    return ScenarioSet(
        scenario_ids=tuple(sid for sid, *_ in cases),
        bus_ids=bus_ids,
        time=TimeStructure(hours_per_day=base.hours_per_day, day_ids=tuple(day_ids)),
        netload_p=np.stack(netload_p),
        netload_q=np.stack(netload_q),
        labels={sid: label for sid, _, _, label in cases},
        expected=expected,
    )


def build_scenario_set(model, selected, growth, base, horizon=DEFAULT_HORIZON, day_ids=None):
    """
    Planning scenarios: every load growth rate crossed with every selected run.

    Args:
        model (GridModel): bus order of the output
        selected (dict): selection label ("min", "avg", "max") -> AdoptionRun
        growth (GrowthScenarioSpec): growth rates and selections to use
        base (BaseYear): full-year base load and PV profile
        day_ids (tuple or None): fixed day set; by default the union of each
            scenario's peak and reverse-peak days
    Returns:
        ScenarioSet: expected scenario (medium rate, "avg" run) first
    """
    labels = [label for label in growth.adoption_selection if label in selected]
    expected_label = "avg" if "avg" in labels else labels[0]
    expected = scenario_id(growth.medium_rate, expected_label)

    cases = []
    for rate in growth.load_growth_rates:
        for label in labels:
            run = selected[label]
            cases.append((scenario_id(rate, label), rate, run.pv_capacity_kw(),
                          {"load_growth_rate": rate, "adoption": label, "run": run.run_id}))
    cases.sort(key=lambda case: case[0] != expected)
    return _assemble(model, base, cases, horizon, day_ids, expected)


def build_heldout_set(model, runs, growth, base, day_ids, horizon=DEFAULT_HORIZON):
    """Every ensemble run crossed with every growth rate, on a fixed day set."""
    cases = [
        (scenario_id(rate, f"run{run.run_id:03d}"), rate, run.pv_capacity_kw(),
         {"load_growth_rate": rate, "adoption": "run", "run": run.run_id})
        for rate in growth.load_growth_rates
        for run in runs
    ]
    return _assemble(model, base, cases, horizon, tuple(day_ids), None)


def sample_heldout(heldout, count):
    """
    ``count`` held-out scenarios spread evenly over load growth rates and,
    within a rate, evenly over ensemble runs. Deterministic; scenarios
    without a growth label form one group.
    """
    if count >= len(heldout):
        return heldout
    groups = {}
    for sid in heldout.scenario_ids:
        groups.setdefault(heldout.labels.get(sid, {}).get("load_growth_rate"), []).append(sid)
    quotas = np.full(len(groups), count // len(groups))
    quotas[:count % len(groups)] += 1
    chosen = []
    for quota, members in zip(quotas, groups.values()):
        quota = min(int(quota), len(members))
        if quota:
            picks = np.linspace(0, len(members) - 1, quota).round().astype(int)
            chosen.extend(members[i] for i in picks)
    logger.info("Held-out sample: %d of %d scenarios over %d growth rates", len(chosen), len(heldout), len(groups))
    return heldout.subset(chosen)
