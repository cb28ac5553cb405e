import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from grid.errors import PlanExtractionError
from grid.io import atomic_write_text
from planning.constraints import network_index

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
BINARY_THRESHOLD = 0.5
BESS_ZERO_MW = 1e-7
COST_REL_TOLERANCE = 1e-4
ROUND_DIGITS = 9


@dataclass(frozen=True, eq=False)
class OperatingSchedule:
    """Dispatch of one scenario read back from a solved problem (MW / MVAr)."""
    scenario_id: str
    day_ids: tuple
    bess_ids: tuple
    bess_p: np.ndarray  # (B, D, H) discharge minus charge
    bess_q: np.ndarray
    reg_bus_ids: tuple
    reg_ratio: np.ndarray  # (R, D, H) voltage ratio sqrt(v / v_inner)
    rho_p: np.ndarray  # (D, H) import at the PoI
    rho_q: np.ndarray
    v_sq: np.ndarray  # (N, D, H) squared voltage magnitudes

    def to_dict(self):
        return {
            "days": list(self.day_ids),
            "bess_p_mw": {b: _rounded(self.bess_p[i]) for i, b in enumerate(self.bess_ids)},
            "bess_q_mvar": {b: _rounded(self.bess_q[i]) for i, b in enumerate(self.bess_ids)},
            "reg_ratio": {b: _rounded(self.reg_ratio[i]) for i, b in enumerate(self.reg_bus_ids)},
            "rho_p_mw": _rounded(self.rho_p),
            "rho_q_mvar": _rounded(self.rho_q),
        }

    @classmethod
    def from_dict(cls, scenario_id, data):
        bess_ids = tuple(data["bess_p_mw"])
        reg_ids = tuple(data["reg_ratio"])
        rho_p = np.array(data["rho_p_mw"], dtype=float)
        shape = rho_p.shape
        return cls(
            scenario_id=scenario_id,
            day_ids=tuple(data["days"]),
            bess_ids=bess_ids,
            bess_p=np.array([data["bess_p_mw"][b] for b in bess_ids], dtype=float).reshape(-1, *shape),
            bess_q=np.array([data["bess_q_mvar"][b] for b in bess_ids], dtype=float).reshape(-1, *shape),
            reg_bus_ids=reg_ids,
            reg_ratio=np.array([data["reg_ratio"][b] for b in reg_ids], dtype=float).reshape(-1, *shape),
            rho_p=rho_p,
            rho_q=np.array(data["rho_q_mvar"], dtype=float),
            v_sq=np.zeros((0, *shape)),
        )


@dataclass(eq=False)
class InvestmentPlan:
    """
    Investment decisions of one solved problem.

    ``lines`` maps each corridor to its selected option; ``bess_mw`` holds
    installed ratings in MW; ``regulators`` lists buses with a new regulator.
    """
    lines: dict
    bess_mw: dict
    regulators: tuple
    cost_lines: float
    cost_bess: float
    cost_regulators: float
    mode: str = ""
    status: str = ""
    objective: float | None = None
    mip_gap: float | None = None
    budget: float | None = None
    peak_direct_mw: float | None = None
    peak_reverse_mw: float | None = None
    upgrades: tuple = ()
    schedules: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def total_cost(self):
        return self.cost_lines + self.cost_bess + self.cost_regulators

    @property
    def plan_id(self):
        decisions = {
            "lines": self.lines,
            "bess_mw": {k: round(v, 6) for k, v in self.bess_mw.items()},
            "regulators": sorted(self.regulators),
        }
        digest = hashlib.sha1(json.dumps(decisions, sort_keys=True).encode()).hexdigest()
        return f"plan-{digest[:10]}"


def _rounded(value):
    if isinstance(value, np.ndarray):
        return np.round(value, ROUND_DIGITS).tolist()
    if value is None:
        return None
    return round(float(value), ROUND_DIGITS)


def plan_costs(model, lines, bess_mw, regulators):
    option_cost = {o.id: o.cost for o in model.options}
    cost_lines = float(sum(option_cost[oid] for oid in lines.values()))
    unit = {b.id: b.unit_cost for b in model.bess_candidates}
    cost_bess = float(sum(unit[bid] * mw for bid, mw in bess_mw.items()))
    reg_cost = {b.id: b.regulator_candidate.cost for b in model.candidate_regulator_buses}
    cost_regs = float(sum(reg_cost[b] for b in regulators))
    return cost_lines, cost_bess, cost_regs


def extract_plan(problem, solution, with_schedules=True):
    """
    Round a solved problem into an InvestmentPlan.

    Raises:
        PlanExtractionError: no solution values, a corridor without exactly one
            selected option, or (cost objective) a recomputed cost that
            disagrees with the solver objective
    """
    if not solution.has_values:
        raise PlanExtractionError(f"no solution to extract (status {solution.status})")
    model = problem.model
    net = network_index(model)
    xl = solution.block(problem.invest.xl)
    xb = solution.block(problem.invest.xb)
    xr = solution.block(problem.invest.xr)

    lines = {}
    for corridor in model.corridors:
        picked = [oid for oid, val in zip(net.option_ids, xl)
                  if val > BINARY_THRESHOLD and model.option_corridor[oid].id == corridor.id]
        if len(picked) != 1:
            raise PlanExtractionError(f"corridor {corridor.id} has {len(picked)} selected options")
        lines[corridor.id] = picked[0]
    bess_mw = {}
    for bid, val in zip(net.bess_ids, xb):
        mw = float(val) * model.s_base
        bess_mw[bid] = 0.0 if mw < BESS_ZERO_MW else mw
    regulators = tuple(bus for bus, val in zip(net.cand_ids, xr) if val > BINARY_THRESHOLD)

    cost_lines, cost_bess, cost_regs = plan_costs(model, lines, bess_mw, regulators)
    total = cost_lines + cost_bess + cost_regs
    if problem.cost_objective and solution.objective is not None:
        if abs(total - solution.objective) > COST_REL_TOLERANCE * max(1.0, abs(solution.objective)):
            raise PlanExtractionError(
                f"recomputed cost {total:,.2f} disagrees with the objective {solution.objective:,.2f}")

    baselines = {c.id: c.baseline.id if c.baseline else None for c in model.corridors}
    plan = InvestmentPlan(
        lines=lines,
        bess_mw=bess_mw,
        regulators=regulators,
        cost_lines=cost_lines,
        cost_bess=cost_bess,
        cost_regulators=cost_regs,
        mode=problem.mode,
        status=solution.status,
        objective=solution.objective,
        mip_gap=solution.mip_gap,
        budget=problem.budget,
        upgrades=tuple(cid for cid, oid in lines.items() if oid != baselines[cid]),
    )
    if problem.peaks is not None or with_schedules:
        schedules = extract_schedules(problem, solution)
        direct, reverse = realized_peaks(schedules.values())
        plan.peak_direct_mw, plan.peak_reverse_mw = direct, reverse
        if with_schedules:
            plan.schedules = schedules
    return plan


def realized_peaks(schedules):
    """Largest PoI import and export over every schedule, MW (both >= 0)."""
    direct, reverse = 0.0, 0.0
    for schedule in schedules:
        direct = max(direct, float(schedule.rho_p.max()))
        reverse = max(reverse, float(-schedule.rho_p.min()))
    return direct, reverse


def extract_schedules(problem, solution):
    """Per-scenario BESS dispatch, regulator ratios and PoI exchange."""
    model = problem.model
    net = network_index(model)
    s_base = model.s_base
    schedules = {}
    for op in problem.ops:
        v = solution.block(op.v)
        vreg = solution.block(op.vreg)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.sqrt(np.where(vreg > 0, v[net.reg_bus_pos] / vreg, 1.0))
        schedules[op.scenario_id] = OperatingSchedule(
            scenario_id=op.scenario_id,
            day_ids=tuple(model.time.day_ids),
            bess_ids=net.bess_ids,
            bess_p=(solution.block(op.dis) - solution.block(op.chg)) * s_base,
            bess_q=solution.block(op.bq) * s_base,
            reg_bus_ids=tuple(net.bus_ids[p] for p in net.reg_bus_pos),
            reg_ratio=ratio,
            rho_p=solution.block(op.rho_p) * s_base,
            rho_q=solution.block(op.rho_q) * s_base,
            v_sq=v,
        )
    return schedules


# ------------------------------------------------------------------ persistence


def plan_to_dict(plan, with_dispatch=True):
    data = {
        "schema_version": SCHEMA_VERSION,
        "plan_id": plan.plan_id,
        "mode": plan.mode,
        "status": plan.status,
        "objective": _rounded(plan.objective),
        "mip_gap": _rounded(plan.mip_gap),
        "budget": _rounded(plan.budget),
        "seed": plan.seed,
        "cost": {
            "lines": _rounded(plan.cost_lines),
            "bess": _rounded(plan.cost_bess),
            "regulators": _rounded(plan.cost_regulators),
            "total": _rounded(plan.total_cost),
        },
        "lines": dict(plan.lines),
        "upgrades": list(plan.upgrades),
        "bess_mw": {k: _rounded(v) for k, v in plan.bess_mw.items()},
        "regulators": list(plan.regulators),
        "peaks": {"direct_mw": _rounded(plan.peak_direct_mw), "reverse_mw": _rounded(plan.peak_reverse_mw)},
    }
    if with_dispatch:
        data["dispatch"] = {sid: s.to_dict() for sid, s in plan.schedules.items()}
    return data


def plan_from_dict(data):
    if data.get("schema_version") != SCHEMA_VERSION:
        raise PlanExtractionError(f"unsupported plan schema version {data.get('schema_version')!r}")
    cost = data["cost"]
    return InvestmentPlan(
        lines=dict(data["lines"]),
        bess_mw={k: float(v) for k, v in data["bess_mw"].items()},
        regulators=tuple(data["regulators"]),
        cost_lines=float(cost["lines"]),
        cost_bess=float(cost["bess"]),
        cost_regulators=float(cost["regulators"]),
        mode=data.get("mode", ""),
        status=data.get("status", ""),
        objective=data.get("objective"),
        mip_gap=data.get("mip_gap"),
        budget=data.get("budget"),
        peak_direct_mw=data.get("peaks", {}).get("direct_mw"),
        peak_reverse_mw=data.get("peaks", {}).get("reverse_mw"),
        upgrades=tuple(data.get("upgrades", ())),
        schedules={sid: OperatingSchedule.from_dict(sid, s) for sid, s in data.get("dispatch", {}).items()},
        seed=data.get("seed"),
    )


def plan_json(plan, with_dispatch=True):
    return json.dumps(plan_to_dict(plan, with_dispatch), sort_keys=True, indent=2) + "\n"


def write_plan(plan, path, with_dispatch=True):
    return atomic_write_text(path, plan_json(plan, with_dispatch))


def read_plan(path):
    with open(path, encoding="utf-8") as f:
        return plan_from_dict(json.load(f))
