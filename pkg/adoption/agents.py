import logging
from dataclasses import dataclass, replace

import numpy as np

logger = logging.getLogger(__name__)

DAYS_PER_YEAR = 365


@dataclass(frozen=True)
class AgentState:
    bus: str
    eligible: bool = False
    adopted: bool = False
    adoption_time: float | None = None
    sized_capacity_kw: float = 0.0
    npv: float = 0.0

    def __post_init__(self):
        if self.adopted and not self.eligible:
            raise ValueError(f"agent at bus {self.bus} adopted without being eligible")
        if self.adopted != (self.adoption_time is not None):
            raise ValueError(f"agent at bus {self.bus}: adoption_time must be set iff adopted")


@dataclass(frozen=True)
class EconomicParams:
    """
    Project economics shared by every agent.

    ``roof_limit_kw`` and ``self_consumption_cap_kwh`` accept a scalar or a
    per-bus mapping. ``capacity_factor_profile`` holds one per-unit value per
    hour of the days it represents (``hours_per_day`` values per day).
    """
    capex_per_kw: float = 2500.0
    tariff: float = 0.20  # currency per kWh
    discount_rate: float = 0.05
    lifetime: int = 25
    capacity_factor_profile: tuple = ()
    roof_limit_kw: float | dict = 400.0
    self_consumption_cap_kwh: float | dict = 400_000.0
    hours_per_day: int = 24

    def __post_init__(self):
        object.__setattr__(self, "capacity_factor_profile",
                           tuple(float(v) for v in self.capacity_factor_profile))
        for name in ("capex_per_kw", "tariff", "discount_rate", "lifetime"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        profile = np.asarray(self.capacity_factor_profile)
        if profile.size and (profile.min() < 0 or profile.max() > 1):
            raise ValueError("capacity factor profile values must lie in [0, 1]")
        if profile.size % self.hours_per_day:
            raise ValueError("capacity factor profile must cover whole days")

    def roof_limit(self, bus):
        return _per_bus(self.roof_limit_kw, bus)

    def consumption_cap(self, bus):
        return _per_bus(self.self_consumption_cap_kwh, bus)

    def energy_per_kw(self):
        """Annual kWh produced per installed kW."""
        profile = np.asarray(self.capacity_factor_profile)
        if not profile.size:
            return 0.0
        days = profile.size / self.hours_per_day
        return float(profile.sum() * DAYS_PER_YEAR / days)


def _per_bus(value, bus):
    if isinstance(value, dict):
        return float(value.get(bus, 0.0))
    return float(value)


def annuity(rate, lifetime):
    """Present value of one currency unit per year over ``lifetime`` years."""
    return (1.0 - (1.0 + rate) ** (-lifetime)) / rate


def npv_curve(bus, econ):
    """(capacities kW, NPV) over the 1 kW grid up to the bus roof limit."""
    capacities = np.arange(1, int(np.floor(econ.roof_limit(bus))) + 1, dtype=float)
    energy = np.minimum(capacities * econ.energy_per_kw(), econ.consumption_cap(bus))
    npv = annuity(econ.discount_rate, econ.lifetime) * econ.tariff * energy - econ.capex_per_kw * capacities
    return capacities, npv


def size_project(bus, econ):
    """
    NPV-maximizing PV capacity for one bus, 0 when no size is profitable.

    Ties on the grid resolve to the smallest capacity.

    Args:
        bus (str): bus id used to look up per-bus limits
        econ (EconomicParams): project economics
    Returns:
        float: capacity in kW
    """
    capacities, npv = npv_curve(bus, econ)
    if not capacities.size:
        return 0.0
    best = int(np.argmax(npv))
    if npv[best] <= 0:
        return 0.0
    return float(capacities[best])


def project_npv(bus, econ, capacity_kw):
    energy = min(capacity_kw * econ.energy_per_kw(), econ.consumption_cap(bus))
    return annuity(econ.discount_rate, econ.lifetime) * econ.tariff * energy - econ.capex_per_kw * capacity_kw


def agents_from_model(model, econ, initial_pv_kw=None):
    """One agent per non-PoI bus, with its sized capacity precomputed."""
    initial_pv_kw = initial_pv_kw or {}
    agents = []
    for bus in model.buses:
        if bus.is_poi:
            continue
        size = size_project(bus.id, econ)
        existing = initial_pv_kw.get(bus.id, 0.0) > 0
        agents.append(AgentState(
            bus=bus.id,
            eligible=existing,
            adopted=existing,
            adoption_time=0.0 if existing else None,
            sized_capacity_kw=float(initial_pv_kw[bus.id]) if existing else size,
            npv=project_npv(bus.id, econ, size),
        ))
    logger.debug("Sized %d agents, %d with a profitable project",
                 len(agents), sum(a.sized_capacity_kw > 0 for a in agents))
    return agents


def mms_screen(agents, mms_probability, rng):
    """
    Bernoulli eligibility trial per agent.

    ``mms_probability`` is either a fraction or a callable
    ``(bus, sized_capacity_kw, npv) -> fraction``. Agents that already adopted
    keep their eligibility; one uniform draw is consumed per agent regardless.
    """
    draws = rng.random(len(agents))
    screened = []
    for agent, u in zip(agents, draws):
        if callable(mms_probability):
            prob = float(mms_probability(agent.bus, agent.sized_capacity_kw, agent.npv))
        else:
            prob = float(mms_probability)
        if not 0.0 <= prob <= 1.0:
            raise ValueError(f"MMS probability for bus {agent.bus} outside [0, 1]: {prob}")
        eligible = agent.adopted or bool(u < prob)
        screened.append(replace(agent, eligible=eligible))
    return screened
