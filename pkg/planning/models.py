import logging
from dataclasses import dataclass, field

import numpy as np

from grid.errors import ScenarioDataError
from grid.validation import validate_scenarios
from planning.constraints import (
    InvestmentVars,
    add_bess,
    add_investment_vars,
    add_line_capacity,
    add_operational_vars,
    add_power_balance,
    add_substation_limit,
    add_voltage,
    compute_big_m,
    network_index,
)
from planning.problem import GE, LE, LinExpr, ProblemSpec

logger = logging.getLogger(__name__)

DETERMINISTIC = "deterministic"
SCENARIO = "scenario"
AWARE = "aware"
EVALUATE = "evaluate"
MODES = (DETERMINISTIC, SCENARIO, AWARE)

DEFAULT_WEIGHT_W = 0.5
PEAK_TIEBREAK = 1e-3
COST_TIEBREAK = 1e-5
BUDGET_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class PeakVars:
    lambda_d: object  # VarRef, p.u.
    lambda_r: object
    slack_d: object | None = None
    slack_r: object | None = None


@dataclass(eq=False)
class PlanningProblem:
    """An assembled ProblemSpec plus the handles needed to read a solution back."""
    spec: ProblemSpec
    model: object
    scenarios: object
    mode: str
    invest: InvestmentVars
    ops: list
    peaks: PeakVars | None = None
    budget: float | None = None
    weight_w: float | None = None
    expected_peaks: tuple | None = None  # (direct, reverse) MW
    cost_objective: bool = False
    elastic: bool = False
    meta: dict = field(default_factory=dict)

    def cost_expr(self):
        coefs, indices = self.invest.cost_terms(self.model)
        return LinExpr.total(coefs, indices)


def _max_cost(model):
    lines = sum(max(o.cost for o in c.options) for c in model.corridors if c.options)
    bess = sum(b.unit_cost * b.max_capacity for b in model.bess_candidates)
    regs = sum(b.regulator_candidate.cost for b in model.candidate_regulator_buses)
    return max(lines + bess + regs, 1.0)


def _prepare(model, scenarios):
    report = validate_scenarios(model, scenarios)
    if not report.ok:
        raise ScenarioDataError("; ".join(str(v) for v in report.violations))
    return model.with_days(scenarios.time.day_ids)


def _build_core(model, scenarios, name, mode, elastic=False, selected=None):
    model = _prepare(model, scenarios)
    spec = ProblemSpec(name)
    invest = add_investment_vars(spec, model)
    line_m, reg_m = compute_big_m(model)
    load_p, load_q = scenarios.aligned(model)
    ops = []
    for k, sid in enumerate(scenarios.scenario_ids):
        op = add_operational_vars(spec, model, k, sid, elastic=elastic, selected=selected)
        add_power_balance(spec, model, op, load_p[k], load_q[k])
        add_line_capacity(spec, model, invest, op)
        add_bess(spec, model, invest, op)
        add_voltage(spec, model, invest, op, line_m, reg_m)
        add_substation_limit(spec, model, op)
        ops.append(op)
    problem = PlanningProblem(spec=spec, model=model, scenarios=scenarios, mode=mode,
                              invest=invest, ops=ops, elastic=elastic)
    logger.debug("Built %s: %s", name, spec.stats())
    return problem


def build_deterministic(model, scenarios):
    """Least-cost plan secure for the expected scenario only."""
    expected = scenarios.expected_scenario() if len(scenarios) > 1 else scenarios
    problem = _build_core(model, expected, "deterministic", DETERMINISTIC)
    problem.spec.set_objective(problem.cost_expr())
    problem.cost_objective = True
    return problem


def build_scenario_based(model, scenarios):
    """Least-cost plan secure for every scenario."""
    problem = _build_core(model, scenarios, "scenario-based", SCENARIO)
    problem.spec.set_objective(problem.cost_expr())
    problem.cost_objective = True
    return problem


def _add_peak_rows(problem):
    """Peak variables bounding PoI exchange in every (scenario, day, hour)."""
    spec = problem.spec
    lambda_d = spec.add_var("lambda_d")
    lambda_r = spec.add_var("lambda_r")
    for op in problem.ops:
        spec.add_rows(op.tag("peak_d"), [(1.0, op.rho_p), (-1.0, lambda_d.index)], LE, 0.0)
        spec.add_rows(op.tag("peak_r"), [(-1.0, op.rho_p), (-1.0, lambda_r.index)], LE, 0.0)
    return lambda_d, lambda_r


def build_transmission_aware(model, scenarios, budget, weight_w=DEFAULT_WEIGHT_W, expected_peaks=(0.0, 0.0),
                             peak_tiebreak=PEAK_TIEBREAK, cost_tiebreak=COST_TIEBREAK):
    """
    Minimize the weighted excess of the direct and reverse PoI peaks over their
    expected values, subject to every scenario and an investment budget.

    Small tie-break weights on the peaks and on the normalized cost make the
    reported peaks equal to the realized ones and stop spending once the
    excess is zero.

    Args:
        budget (float): investment cap in currency, >= 0
        weight_w (float): weight of the direct-peak excess, in [0, 1]
        expected_peaks (tuple): (direct, reverse) expected peaks in MW
    Returns:
        PlanningProblem
    """
    if budget is None or budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    if not 0.0 <= weight_w <= 1.0:
        raise ValueError(f"weight must lie in [0, 1], got {weight_w}")
    problem = _build_core(model, scenarios, f"aware-{budget:.0f}", AWARE)
    spec = problem.spec
    s_base = problem.model.s_base

    cost = problem.cost_expr()
    spec.add_constraint(cost, LE, budget * (1.0 + BUDGET_TOLERANCE) + BUDGET_TOLERANCE, name="budget")

    lambda_d, lambda_r = _add_peak_rows(problem)
    slack_d = spec.add_var("slack_d")
    slack_r = spec.add_var("slack_r")
    big_d, big_r = (float(x) / s_base for x in expected_peaks)
    spec.add_constraint(slack_d - lambda_d, GE, -big_d, name="excess_d")
    spec.add_constraint(slack_r - lambda_r, GE, -big_r, name="excess_r")

    objective = weight_w * slack_d + (1.0 - weight_w) * slack_r
    objective = objective + peak_tiebreak * (lambda_d + lambda_r)
    objective = objective + cost * (cost_tiebreak / _max_cost(problem.model))
    spec.set_objective(objective)

    problem.peaks = PeakVars(lambda_d, lambda_r, slack_d, slack_r)
    problem.budget = float(budget)
    problem.weight_w = float(weight_w)
    problem.expected_peaks = tuple(float(x) for x in expected_peaks)
    return problem


def build_evaluation(model, scenarios, plan, weight_w=DEFAULT_WEIGHT_W, elastic=False,
                     peak_tiebreak=PEAK_TIEBREAK):
    """
    Operational problem with the investments of ``plan`` fixed.

    Minimizes the weighted PoI peaks; the elastic variant instead minimizes
    the total violation of line capacities and voltage limits.
    """
    net = network_index(model)
    chosen = set(plan.lines.values())
    selected = np.array([oid in chosen for oid in net.option_ids])
    problem = _build_core(model, scenarios, f"evaluate-{plan.plan_id}", EVALUATE,
                          elastic=elastic, selected=selected)
    spec = problem.spec
    fix_investments(problem, plan)
    lambda_d, lambda_r = _add_peak_rows(problem)
    objective = weight_w * lambda_d + (1.0 - weight_w) * lambda_r + peak_tiebreak * (lambda_d + lambda_r)
    if elastic:
        violation = LinExpr()
        for op in problem.ops:
            for block in (op.cap_slack, op.vlo_slack, op.vhi_slack):
                violation = violation + LinExpr.total(1.0, block)
        objective = violation + peak_tiebreak * objective
    spec.set_objective(objective)
    problem.peaks = PeakVars(lambda_d, lambda_r)
    problem.weight_w = float(weight_w)
    return problem


def fix_investments(problem, plan):
    """Pin every investment variable of ``problem`` to the decisions of ``plan``."""
    spec, model, inv = problem.spec, problem.model, problem.invest
    net = network_index(model)
    chosen = set(plan.lines.values())
    for l, oid in enumerate(net.option_ids):
        spec.fix(int(inv.xl.index[l]), 1.0 if oid in chosen else 0.0)
    for b, bid in enumerate(net.bess_ids):
        spec.fix(int(inv.xb.index[b]), plan.bess_mw.get(bid, 0.0) / model.s_base)
    installed = set(plan.regulators)
    for r, bus_id in enumerate(net.cand_ids):
        spec.fix(int(inv.xr.index[r]), 1.0 if bus_id in installed else 0.0)
