import logging
from dataclasses import dataclass, field

import numpy as np

from grid.errors import PlanExtractionError
from planning.backends import INFEASIBLE, solve
from planning.constraints import network_index
from planning.models import DEFAULT_WEIGHT_W, build_deterministic, build_evaluation
from planning.plan import extract_plan, extract_schedules, realized_peaks

logger = logging.getLogger(__name__)

VIOLATION_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ConstraintViolation:
    kind: str  # "line capacity", "voltage low", "voltage high"
    element: str
    scenario_id: str
    day: int
    hour: int
    amount: float  # MVA above capacity, or squared-voltage distance to the limit

    def __str__(self):
        unit = "MVA" if self.kind == "line capacity" else "p.u.^2"
        return (f"{self.kind} [{self.element}] exceeded by {self.amount:.4f} {unit} "
                f"(scenario {self.scenario_id}, day {self.day}, hour {self.hour})")


@dataclass(frozen=True, eq=False)
class PlanEvaluation:
    scenario_ids: tuple
    status: str
    feasible: bool
    peak_direct_mw: float | None
    peak_reverse_mw: float | None
    violations: tuple = ()
    schedules: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class ExpectedPeaks:
    direct_mw: float
    reverse_mw: float
    plan: object  # deterministic InvestmentPlan


def summarize_violations(problem, solution, tol=VIOLATION_TOLERANCE):
    """Worst violation per element and scenario in a solved elastic problem."""
    model = problem.model
    net = network_index(model)
    days = model.time.day_ids
    found = []
    for op in problem.ops:
        for kind, block, labels, scale in (
            ("line capacity", op.cap_slack, net.option_ids, model.s_base),
            ("voltage low", op.vlo_slack, net.bus_ids, 1.0),
            ("voltage high", op.vhi_slack, net.bus_ids, 1.0),
        ):
            values = solution.block(block)
            for i, label in enumerate(labels):
                worst = np.unravel_index(int(np.argmax(values[i])), values[i].shape)
                amount = float(values[i][worst])
                if amount > tol:
                    found.append(ConstraintViolation(kind, label, op.scenario_id, int(days[worst[0]]),
                                                     int(worst[1]), amount * scale))
    found.sort(key=lambda v: -v.amount)
    return tuple(found)


def evaluate_plan(model, plan, scenarios, weight_w=DEFAULT_WEIGHT_W, backend=None):
    """
    Operate a fixed plan on ``scenarios`` and report the weighted-minimal PoI peaks.

    An infeasible plan is re-solved with elastic line and voltage limits to
    report which constraints it breaks; the peaks then describe the elastic
    dispatch.

    Returns:
        PlanEvaluation
    """
    problem = build_evaluation(model, scenarios, plan, weight_w)
    solution = solve(problem, backend)
    if solution.has_values:
        schedules = extract_schedules(problem, solution)
        direct, reverse = realized_peaks(schedules.values())
        return PlanEvaluation(scenarios.scenario_ids, solution.status, True, direct, reverse, (), schedules)

    if solution.status != INFEASIBLE:
        logger.warning("[WARN] Evaluation of %s ended with status %s", plan.plan_id, solution.status)
        return PlanEvaluation(scenarios.scenario_ids, solution.status, False, None, None)

    elastic = build_evaluation(model, scenarios, plan, weight_w, elastic=True)
    relaxed = solve(elastic, backend)
    if not relaxed.has_values:
        return PlanEvaluation(scenarios.scenario_ids, INFEASIBLE, False, None, None)
    violations = summarize_violations(elastic, relaxed)
    schedules = extract_schedules(elastic, relaxed)
    direct, reverse = realized_peaks(schedules.values())
    logger.debug("Plan %s infeasible on %s: %d violations", plan.plan_id,
                 ",".join(scenarios.scenario_ids), len(violations))
    return PlanEvaluation(scenarios.scenario_ids, INFEASIBLE, False, direct, reverse, violations, schedules)


def derive_expected_peaks(model, scenarios, weight_w=DEFAULT_WEIGHT_W, backend=None):
    """
    Expected direct and reverse peaks: the deterministic plan operated on the
    expected scenario.
    """
    problem = build_deterministic(model, scenarios)
    solution = solve(problem, backend)
    if not solution.has_values:
        raise PlanExtractionError(f"deterministic model has no solution (status {solution.status})")
    plan = extract_plan(problem, solution, with_schedules=False)
    evaluation = evaluate_plan(model, plan, scenarios.expected_scenario(), weight_w, backend)
    if not evaluation.feasible:
        raise PlanExtractionError("deterministic plan is not operable on the expected scenario")
    logger.info("Expected peaks: direct %.3f MW, reverse %.3f MW (deterministic cost %.0f)",
                evaluation.peak_direct_mw, evaluation.peak_reverse_mw, plan.total_cost)
    return ExpectedPeaks(evaluation.peak_direct_mw, evaluation.peak_reverse_mw, plan)
