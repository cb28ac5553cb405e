from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from grid.model import TimeStructure


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """
    Netload realizations indexed (scenario, bus, day, hour), in MW / MVAr.

    ``labels`` maps scenario id to metadata (load_growth_rate, adoption, run).
    ``expected`` names the scenario used by the deterministic model; when set
    it is the first scenario.
    """
    scenario_ids: tuple[str, ...]
    bus_ids: tuple[str, ...]
    time: TimeStructure
    netload_p: np.ndarray
    netload_q: np.ndarray
    labels: dict = field(default_factory=dict)
    expected: str | None = None

    def __post_init__(self):
        for name in ("netload_p", "netload_q"):
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @cached_property
    def scenario_index(self):
        return {sid: i for i, sid in enumerate(self.scenario_ids)}

    @cached_property
    def bus_index(self):
        return {bid: i for i, bid in enumerate(self.bus_ids)}

    def __len__(self):
        return len(self.scenario_ids)

    @property
    def expected_id(self):
        return self.expected if self.expected is not None else self.scenario_ids[0]

    def subset(self, scenario_ids):
        """New set restricted to ``scenario_ids`` (order preserved as given)."""
        idx = [self.scenario_index[sid] for sid in scenario_ids]
        expected = self.expected if self.expected in scenario_ids else None
        return ScenarioSet(
            scenario_ids=tuple(scenario_ids),
            bus_ids=self.bus_ids,
            time=self.time,
            netload_p=self.netload_p[idx],
            netload_q=self.netload_q[idx],
            labels={sid: self.labels.get(sid, {}) for sid in scenario_ids},
            expected=expected,
        )

    def single(self, scenario_id):
        return self.subset([scenario_id])

    def expected_scenario(self):
        return self.single(self.expected_id)

    def aligned(self, model):
        """(P, Q) arrays in p.u. with the bus axis in ``model.buses`` order."""
        order = [self.bus_index[bus.id] for bus in model.buses]
        return (self.netload_p[:, order] / model.s_base,
                self.netload_q[:, order] / model.s_base)

    @classmethod
    def concat(cls, sets, expected=None):
        first = sets[0]
        for other in sets[1:]:
            if other.bus_ids != first.bus_ids or other.time != first.time:
                raise ValueError("scenario sets differ in buses or time structure")
        labels = {}
        for s in sets:
            labels.update(s.labels)
        return cls(
            scenario_ids=tuple(sid for s in sets for sid in s.scenario_ids),
            bus_ids=first.bus_ids,
            time=first.time,
            netload_p=np.concatenate([s.netload_p for s in sets]),
            netload_q=np.concatenate([s.netload_q for s in sets]),
            labels=labels,
            expected=expected,
        )

    def dominated_by(self, planning, tol=1e-9):
        """
        Per scenario, whether one planning scenario bounds it at every
        (bus, day, hour): each P and Q entry lies between zero and the
        planning entry, so neither import nor export grows anywhere.

        Returns:
            dict: scenario id -> bool
        """
        if set(planning.bus_ids) != set(self.bus_ids) or planning.time.day_ids != self.time.day_ids:
            raise ValueError("dominance needs scenario sets on the same buses and days")
        order = [planning.bus_index[bid] for bid in self.bus_ids]
        held = np.stack([self.netload_p.reshape(len(self), -1), self.netload_q.reshape(len(self), -1)], axis=1)
        bound = np.stack([planning.netload_p[:, order].reshape(len(planning), -1),
                          planning.netload_q[:, order].reshape(len(planning), -1)], axis=1)
        # (held-out, planning, quantity, entry)
        h, b = held[:, None], bound[None, :]
        inside = (h * b >= -tol) & (np.abs(h) <= np.abs(b) + tol)
        covered = inside.all(axis=(2, 3)).any(axis=1)
        return dict(zip(self.scenario_ids, covered.tolist()))
