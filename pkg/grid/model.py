"""
Feeder domain types.

Electrical quantities are per-unit on ``GridModel.s_base`` after ingestion
(line capacities, impedances, squared voltages). Costs stay in currency; BESS
sizes and netloads stay in MW and are converted by the problem builders.
"""

from dataclasses import dataclass, field, replace
from functools import cached_property

import networkx as nx

DEFAULT_HYPERPLANES = 12
DEFAULT_VMIN_SQ = 0.95 ** 2
DEFAULT_VMAX_SQ = 1.05 ** 2
DEFAULT_RATIO_MIN_SQ = 0.9 ** 2
DEFAULT_RATIO_MAX_SQ = 1.1 ** 2


@dataclass(frozen=True)
class RegulatorCandidate:
    cost: float
    ratio_min_sq: float = DEFAULT_RATIO_MIN_SQ
    ratio_max_sq: float = DEFAULT_RATIO_MAX_SQ
    big_m: float | None = None


@dataclass(frozen=True)
class Bus:
    id: str
    vmin_sq: float = DEFAULT_VMIN_SQ
    vmax_sq: float = DEFAULT_VMAX_SQ
    has_existing_regulator: bool = False
    regulator_candidate: RegulatorCandidate | None = None
    is_poi: bool = False
    # ratio range of an existing regulator (candidates carry their own)
    existing_ratio_min_sq: float = DEFAULT_RATIO_MIN_SQ
    existing_ratio_max_sq: float = DEFAULT_RATIO_MAX_SQ
    # only read by the synthetic base-year generator
    peak_mw: float = 0.0
    power_factor: float = 0.95

    @property
    def has_regulation(self):
        return self.has_existing_regulator or self.regulator_candidate is not None

    @property
    def is_regulator_candidate(self):
        return self.regulator_candidate is not None and not self.has_existing_regulator

    def ratio_bounds(self):
        """Squared regulation ratio range (Phi_min, Phi_max) of the bus regulator."""
        if self.has_existing_regulator:
            return self.existing_ratio_min_sq, self.existing_ratio_max_sq
        if self.regulator_candidate is not None:
            return self.regulator_candidate.ratio_min_sq, self.regulator_candidate.ratio_max_sq
        return 1.0, 1.0


@dataclass(frozen=True)
class LineOption:
    id: str
    cost: float
    resistance: float
    reactance: float
    capacity: float
    big_m: float | None = None
    baseline: bool = False


@dataclass(frozen=True)
class Corridor:
    id: str
    from_bus: str
    to_bus: str
    options: tuple[LineOption, ...]

    @property
    def baseline(self):
        for option in self.options:
            if option.baseline:
                return option
        return None

    def oriented(self, parent):
        """Return the corridor with ``from_bus`` set to ``parent``."""
        if self.from_bus == parent:
            return self
        return replace(self, from_bus=self.to_bus, to_bus=self.from_bus)


@dataclass(frozen=True)
class BessCandidate:
    id: str
    bus: str
    unit_cost: float  # currency per MW
    eff_charge: float = 0.95
    eff_discharge: float = 0.95
    duration_ratio: float = 4.0  # hours
    max_capacity: float = 1.0  # MW


@dataclass(frozen=True)
class TimeStructure:
    hours_per_day: int = 24
    day_ids: tuple[int, ...] = ()
    day_weights: tuple[float, ...] | None = None

    @property
    def n_days(self):
        return len(self.day_ids)


@dataclass(frozen=True)
class Topology:
    """Rooted view of a radial feeder: orientation FR = bus nearer the PoI."""
    root: str
    order: tuple[str, ...]  # breadth-first from the root
    parent: dict
    children: dict
    corridor_to: dict  # child bus -> oriented corridor feeding it

    def path_to_root(self, bus):
        path = [bus]
        while path[-1] != self.root:
            path.append(self.parent[path[-1]])
        return path


@dataclass(frozen=True)
class GridModel:
    buses: tuple[Bus, ...]
    corridors: tuple[Corridor, ...]
    bess_candidates: tuple[BessCandidate, ...] = ()
    time: TimeStructure = field(default_factory=TimeStructure)
    s_base: float = 1.0  # MVA
    hyperplane_count: int = DEFAULT_HYPERPLANES
    v_ref_sq: float = 1.0
    substation_limit: float | None = None  # p.u. apparent power at the PoI
    name: str = "feeder"

    @cached_property
    def bus_index(self):
        return {bus.id: i for i, bus in enumerate(self.buses)}

    @cached_property
    def bus_by_id(self):
        return {bus.id: bus for bus in self.buses}

    @property
    def poi(self):
        for bus in self.buses:
            if bus.is_poi:
                return bus
        raise ValueError("feeder has no PoI bus")

    @cached_property
    def options(self):
        """Every line option of every corridor, in corridor order."""
        return tuple(option for corridor in self.corridors for option in corridor.options)

    @cached_property
    def option_corridor(self):
        return {option.id: corridor for corridor in self.corridors for option in corridor.options}

    @cached_property
    def regulated_buses(self):
        return tuple(bus for bus in self.buses if bus.has_regulation)

    @cached_property
    def candidate_regulator_buses(self):
        return tuple(bus for bus in self.buses if bus.is_regulator_candidate)

    @cached_property
    def topology(self):
        """Tree orientation from the PoI. Only meaningful for a validated model."""
        graph = nx.Graph()
        graph.add_nodes_from(bus.id for bus in self.buses)
        by_pair = {}
        for corridor in self.corridors:
            graph.add_edge(corridor.from_bus, corridor.to_bus)
            by_pair[frozenset((corridor.from_bus, corridor.to_bus))] = corridor
        root = self.poi.id
        parent = dict(nx.bfs_predecessors(graph, root))
        order = (root,) + tuple(child for _, child in nx.bfs_edges(graph, root))
        children = {bus.id: [] for bus in self.buses}
        corridor_to = {}
        for child in order[1:]:
            up = parent[child]
            children[up].append(child)
            corridor_to[child] = by_pair[frozenset((up, child))].oriented(up)
        return Topology(
            root=root,
            order=order,
            parent=parent,
            children={k: tuple(v) for k, v in children.items()},
            corridor_to=corridor_to,
        )

    @cached_property
    def oriented_corridors(self):
        """Corridors with FR nearer the root, in breadth-first order of their TO bus."""
        topo = self.topology
        return tuple(topo.corridor_to[child] for child in topo.order[1:])

    def with_days(self, day_ids):
        return replace(self, time=replace(self.time, day_ids=tuple(day_ids)))
