import math
from collections import Counter
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

NON_RADIAL = "non-radial topology"
DANGLING = "dangling reference"
NONPOSITIVE = "nonpositive capacity"
DUPLICATE = "duplicate id"
BOUNDS = "invalid bounds"
BASELINE = "baseline option"
POI = "point of interconnection"
PARAMETER = "invalid parameter"


@dataclass(frozen=True)
class Violation:
    kind: str
    element: str
    message: str

    def __str__(self):
        return f"{self.kind} [{self.element}]: {self.message}"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def kinds(self):
        return {v.kind for v in self.violations}

    def add(self, kind, element, message):
        self.violations.append(Violation(kind, str(element), message))

    def __len__(self):
        return len(self.violations)


def _duplicates(ids):
    return [k for k, count in Counter(ids).items() if count > 1]


def validate(model):
    """
    Check a parsed feeder for structural and numerical consistency.

    Report-style: never raises, callers decide to abort.

    Args:
        model (GridModel): feeder as parsed from its document
    Returns:
        ValidationReport: empty iff the model is valid
    """
    report = ValidationReport()
    bus_ids = {bus.id for bus in model.buses}

    for kind, ids in (
        ("bus", [b.id for b in model.buses]),
        ("corridor", [c.id for c in model.corridors]),
        ("line option", [o.id for c in model.corridors for o in c.options]),
        ("bess", [b.id for b in model.bess_candidates]),
    ):
        for dup in _duplicates(ids):
            report.add(DUPLICATE, dup, f"{kind} id used more than once")

    if model.s_base <= 0:
        report.add(PARAMETER, "s_base", "MVA base must be positive")
    if model.hyperplane_count < 4:
        report.add(PARAMETER, "hyperplane_count", "need at least 4 hyperplanes")
    if model.substation_limit is not None and model.substation_limit <= 0:
        report.add(NONPOSITIVE, "substation_limit", "substation limit must be positive")
    if model.time.hours_per_day < 1:
        report.add(PARAMETER, "time", "hours_per_day must be >= 1")
    for dup in _duplicates(model.time.day_ids):
        report.add(DUPLICATE, dup, "representative day listed twice")

    pois = [bus for bus in model.buses if bus.is_poi]
    if len(pois) != 1:
        report.add(POI, ",".join(b.id for b in pois) or "-", f"expected exactly one PoI bus, found {len(pois)}")
    elif not pois[0].vmin_sq <= model.v_ref_sq <= pois[0].vmax_sq:
        report.add(BOUNDS, pois[0].id, "PoI reference voltage outside the bus limits")

    for bus in model.buses:
        if not 0 < bus.vmin_sq < bus.vmax_sq:
            report.add(BOUNDS, bus.id, f"need 0 < vmin_sq < vmax_sq, got {bus.vmin_sq}, {bus.vmax_sq}")
        if bus.has_existing_regulator and bus.regulator_candidate is not None:
            report.add(PARAMETER, bus.id, "bus has both an existing and a candidate regulator")
        if bus.has_regulation:
            lo, hi = bus.ratio_bounds()
            if not 0 < lo <= 1 <= hi:
                report.add(BOUNDS, bus.id, f"regulation ratio range must satisfy 0 < min <= 1 <= max, got [{lo}, {hi}]")
        if bus.regulator_candidate is not None and bus.regulator_candidate.cost < 0:
            report.add(PARAMETER, bus.id, "regulator cost must be >= 0")

    for corridor in model.corridors:
        for end in (corridor.from_bus, corridor.to_bus):
            if end not in bus_ids:
                report.add(DANGLING, corridor.id, f"unknown bus id {end!r}")
        if not corridor.options:
            report.add(BASELINE, corridor.id, "corridor has no line options")
            continue
        baselines = [o for o in corridor.options if o.baseline]
        if len(baselines) != 1:
            report.add(BASELINE, corridor.id, f"expected exactly one baseline option, found {len(baselines)}")
        for option in corridor.options:
            if option.capacity <= 0:
                report.add(NONPOSITIVE, option.id, f"capacity must be positive, got {option.capacity}")
            if option.resistance < 0 or option.reactance < 0:
                report.add(PARAMETER, option.id, "resistance and reactance must be >= 0")
            if option.cost < 0:
                report.add(PARAMETER, option.id, "cost must be >= 0")
            if option.baseline and option.cost != 0:
                report.add(BASELINE, option.id, "baseline option must have zero cost")
            if not all(math.isfinite(v) for v in (option.cost, option.resistance, option.reactance, option.capacity)):
                report.add(PARAMETER, option.id, "nonfinite line parameter")

    for bess in model.bess_candidates:
        if bess.bus not in bus_ids:
            report.add(DANGLING, bess.id, f"unknown bus id {bess.bus!r}")
        if not (0 < bess.eff_charge <= 1 and 0 < bess.eff_discharge <= 1):
            report.add(PARAMETER, bess.id, "efficiencies must lie in (0, 1]")
        if bess.duration_ratio <= 0:
            report.add(PARAMETER, bess.id, "duration ratio must be positive")
        if bess.max_capacity <= 0:
            report.add(NONPOSITIVE, bess.id, "maximum capacity must be positive")
        if bess.unit_cost < 0:
            report.add(PARAMETER, bess.id, "unit cost must be >= 0")

    # radiality over the corridors whose ends resolve
    graph = nx.MultiGraph()
    graph.add_nodes_from(bus_ids)
    graph.add_edges_from(
        (c.from_bus, c.to_bus) for c in model.corridors
        if c.from_bus in bus_ids and c.to_bus in bus_ids
    )
    if graph.number_of_nodes() and not nx.is_tree(graph):
        if graph.number_of_edges() != graph.number_of_nodes() - 1:
            detail = f"{graph.number_of_edges()} corridors for {graph.number_of_nodes()} buses"
        else:
            detail = "corridor graph is not connected"
        report.add(NON_RADIAL, model.name, detail)

    return report


def validate_scenarios(model, scenarios):
    """Check that a ScenarioSet is dense, finite and shaped for ``model``."""
    report = ValidationReport()
    missing = [b.id for b in model.buses if b.id not in scenarios.bus_index]
    for bus_id in missing:
        report.add(DANGLING, bus_id, "bus has no netload series")
    if scenarios.time.hours_per_day != model.time.hours_per_day:
        report.add(PARAMETER, "time", (
            f"scenario hours per day {scenarios.time.hours_per_day} "
            f"!= feeder {model.time.hours_per_day}"
        ))
    for name, array in (("netload_p", scenarios.netload_p), ("netload_q", scenarios.netload_q)):
        expected = (len(scenarios.scenario_ids), len(scenarios.bus_ids),
                    scenarios.time.n_days, scenarios.time.hours_per_day)
        if array.shape != expected:
            report.add(PARAMETER, name, f"shape {array.shape} != {expected}")
        elif not np.isfinite(array).all():
            report.add(PARAMETER, name, "array contains nonfinite values")
    return report
