import logging
from dataclasses import dataclass, replace

import numpy as np

from grid.errors import DiffusionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AdoptionRun:
    """
    One simulated adoption trajectory.

    ``states`` is a boolean array (steps + 1, agents) of adoption flags at each
    step time; ``sized_kw`` holds the capacity each agent installs on adoption.
    """
    run_id: int
    bus_ids: tuple[str, ...]
    times: np.ndarray
    states: np.ndarray
    sized_kw: np.ndarray
    agents: tuple

    @property
    def adopted_fraction(self):
        """Fraction of all agents adopted at each step."""
        return self.states.mean(axis=1)

    @property
    def capacity_trajectory_kw(self):
        """Aggregate installed PV capacity at each step."""
        return self.states.astype(float) @ self.sized_kw

    @property
    def final_capacity_kw(self):
        return float(self.capacity_trajectory_kw[-1])

    def pv_capacity_kw(self):
        """Installed capacity per bus at the end of the horizon."""
        installed = np.where(self.states[-1], self.sized_kw, 0.0)
        return dict(zip(self.bus_ids, installed.tolist()))

    @property
    def eligible_count(self):
        return sum(a.eligible for a in self.agents)


def simulate_adoption(model, params, agents, rng=None, run_id=0):
    """
    Step every eligible, non-adopted agent through the per-step adoption rule.

    The imitation term counts adopters over all agents, eligible or not. One
    uniform draw is consumed per agent per step so that a run is a pure
    function of its RNG stream.

    Args:
        model (GridModel or None): only checked for unknown bus ids
        params (DiffusionParams): p, q, dt and horizon
        agents (list[AgentState]): screened agents
        rng (np.random.Generator): defaults to ``default_rng(params.seed)``
    Returns:
        AdoptionRun
    """
    if rng is None:
        rng = np.random.default_rng(params.seed)
    if model is not None:
        unknown = [a.bus for a in agents if a.bus not in model.bus_index]
        if unknown:
            raise ValueError(f"agents placed at unknown buses: {unknown}")

    n = len(agents)
    steps = params.steps
    eligible = np.array([a.eligible for a in agents], dtype=bool)
    adopted = np.array([a.adopted for a in agents], dtype=bool)
    adoption_time = np.array([np.nan if a.adoption_time is None else a.adoption_time for a in agents])
    states = np.zeros((steps + 1, n), dtype=bool)
    states[0] = adopted

    for m in range(steps):
        share = adopted.sum() / n if n else 0.0
        prob = (params.p_innov + params.q_imit * share) * params.dt
        if not 0.0 <= prob <= 1.0:
            raise DiffusionError(f"adoption probability {prob:.4f} outside [0, 1] at step {m}")
        draws = rng.random(n)
        new = eligible & ~adopted & (draws < prob)
        adopted = adopted | new
        adoption_time[new] = (m + 1) * params.dt
        states[m + 1] = adopted

    updated = tuple(
        replace(agent,
                adopted=bool(adopted[i]),
                adoption_time=None if np.isnan(adoption_time[i]) else float(adoption_time[i]))
        for i, agent in enumerate(agents)
    )
    run = AdoptionRun(
        run_id=run_id,
        bus_ids=tuple(a.bus for a in agents),
        times=params.step_times(),
        states=states,
        sized_kw=np.array([a.sized_capacity_kw for a in agents], dtype=float),
        agents=updated,
    )
    logger.debug("Run %d: %d/%d adopters, %.1f kW", run_id, int(adopted.sum()), n, run.final_capacity_kw)
    return run
