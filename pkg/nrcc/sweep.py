import csv
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from grid.errors import InfeasibleBudgetError, PlanExtractionError, SolverError
from nrcc.evaluate import evaluate_plan
from planning.backends import INFEASIBLE, OPTIMAL, SolverSettings, make_backend, solve
from planning.models import DEFAULT_WEIGHT_W, build_scenario_based, build_transmission_aware
from planning.plan import extract_plan

logger = logging.getLogger(__name__)

DEFAULT_BUDGET_COUNT = 8
DEFAULT_BUDGET_MULTIPLE = 3.0
SWEEP_TOLERANCE = 1e-4  # MW
POSITIVE_PART_TOL = 1e-8  # p.u.
INFEASIBLE_BUDGET = "infeasible-budget"
SWEEP_LOG_HEADER = ["gamma", "status", "objective", "lambda_d_mw", "lambda_r_mw", "mip_gap", "seconds"]
DISPERSION_COLUMNS = ["gamma", "plan_id", "scenario_id", "feasible", "peak_d_mw", "peak_r_mw", "violations",
                      "dominated", "contained"]


@dataclass(frozen=True)
class SweepConfig:
    budgets: tuple[float, ...]
    weight_w: float = DEFAULT_WEIGHT_W
    expected_peaks: tuple[float, float] = (0.0, 0.0)  # (direct, reverse) MW
    backend: str = "highs"
    solver: SolverSettings = field(default_factory=SolverSettings)
    jobs: int | None = None

    def __post_init__(self):
        budgets = tuple(sorted({float(b) for b in self.budgets}))
        if not budgets:
            raise ValueError("need at least one budget")
        if budgets[0] < 0:
            raise ValueError("budgets must be >= 0")
        if not 0.0 <= self.weight_w <= 1.0:
            raise ValueError("weight_w must lie in [0, 1]")
        object.__setattr__(self, "budgets", budgets)
        object.__setattr__(self, "expected_peaks", tuple(float(x) for x in self.expected_peaks))

    def make_backend(self):
        return make_backend(self.backend, self.solver)


@dataclass(eq=False)
class NrccPoint:
    budget: float
    status: str
    lambda_d_mw: float | None = None
    lambda_r_mw: float | None = None
    objective: float | None = None
    mip_gap: float | None = None
    seconds: float = 0.0
    plan: object = None
    line_savings: float | None = None

    @property
    def feasible(self):
        return self.plan is not None


@dataclass(eq=False)
class NrccCurve:
    """Budget-indexed direct and reverse peak pairs of the transmission-aware model."""
    points: list
    weight_w: float
    expected_peaks: tuple
    reference_plan: object = None
    dispersion: pd.DataFrame | None = None

    def feasible_points(self):
        return [p for p in self.points if p.feasible]

    def frame(self):
        rows = []
        for p in self.points:
            plan = p.plan
            rows.append({
                "gamma": p.budget,
                "status": p.status,
                "lambda_d_mw": p.lambda_d_mw,
                "lambda_r_mw": p.lambda_r_mw,
                "cost_lines": plan.cost_lines if plan else None,
                "cost_bess": plan.cost_bess if plan else None,
                "cost_regulators": plan.cost_regulators if plan else None,
                "total_cost": plan.total_cost if plan else None,
                "line_savings": p.line_savings,
                "bess_mw": sum(plan.bess_mw.values()) if plan else None,
                "upgrades": ";".join(plan.upgrades) if plan else "",
                "plan_id": plan.plan_id if plan else "",
                "objective": p.objective,
                "mip_gap": p.mip_gap,
            })
        return pd.DataFrame(rows)

    def is_monotone(self, tol=SWEEP_TOLERANCE):
        """True if both peaks are nonincreasing in the budget (within ``tol`` MW)."""
        pts = self.feasible_points()
        for a, b in zip(pts, pts[1:]):
            if b.lambda_d_mw > a.lambda_d_mw + tol or b.lambda_r_mw > a.lambda_r_mw + tol:
                return False
        return True

    def plot_data(self):
        """
        One row per feasible budget: the planned netload range [-lambda_r, lambda_d]
        and the range [disp_lo, disp_hi] realized over held-out scenarios (NaN
        without a dispersion run).
        """
        pts = self.feasible_points()
        data = pd.DataFrame({
            "gamma": [p.budget for p in pts],
            "lambda_d": [p.lambda_d_mw for p in pts],
            "lambda_r": [p.lambda_r_mw for p in pts],
        })
        if self.dispersion is None or self.dispersion.empty:
            data["disp_lo"] = np.nan
            data["disp_hi"] = np.nan
            return data
        summary = dispersion_summary(self.dispersion)
        summary = summary.assign(disp_lo=-summary["r_max"], disp_hi=summary["d_max"])
        return data.merge(summary[["gamma", "disp_lo", "disp_hi"]], on="gamma", how="left")


def budget_grid(min_cost, count=DEFAULT_BUDGET_COUNT, multiple=DEFAULT_BUDGET_MULTIPLE, start=0.0):
    """``count`` evenly spaced budgets from ``start`` to ``multiple`` x the minimum secure cost."""
    if count < 2:
        raise ValueError("need at least two budgets")
    top = max(multiple * min_cost, start)
    return tuple(float(b) for b in np.linspace(start, top, count))


def min_secure_cost(model, scenarios, backend=None):
    """Cost of the scenario-based plan, and the plan itself."""
    problem = build_scenario_based(model, scenarios)
    solution = solve(problem, backend)
    if not solution.has_values:
        return None, None
    plan = extract_plan(problem, solution)
    return plan.total_cost, plan


class SweepLog:
    """Append-only CSV log of solved budget points."""

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()
        if path is not None:
            with open(path, "w", newline="") as f:
                csv.writer(f).writerow(SWEEP_LOG_HEADER)

    def write(self, point):
        if self.path is None:
            return
        with self._lock, open(self.path, "a", newline="") as f:
            csv.writer(f).writerow([
                point.budget, point.status, point.objective, point.lambda_d_mw,
                point.lambda_r_mw, point.mip_gap, round(point.seconds, 3),
            ])


def solve_point(model, scenarios, config, budget, reference_plan=None):
    start = time.perf_counter()
    problem = build_transmission_aware(model, scenarios, budget, config.weight_w, config.expected_peaks)
    solution = solve(problem, config.make_backend())
    point = NrccPoint(budget=budget, status=solution.status, objective=solution.objective,
                      mip_gap=solution.mip_gap)
    if solution.status == INFEASIBLE:
        point.status = INFEASIBLE_BUDGET
    elif solution.has_values:
        try:
            plan = extract_plan(problem, solution)
        except PlanExtractionError as exc:
            logger.warning("[WARN] Budget %.2f: %s", budget, exc)
            point.status = "extraction-error"
        else:
            point.plan = plan
            point.lambda_d_mw = plan.peak_direct_mw
            point.lambda_r_mw = plan.peak_reverse_mw
            if reference_plan is not None:
                point.line_savings = reference_plan.cost_lines - plan.cost_lines
            if solution.status == OPTIMAL:
                check_positive_part(problem, solution)
    point.seconds = time.perf_counter() - start
    return point


def check_positive_part(problem, solution, tol=POSITIVE_PART_TOL):
    """
    Each peak slack of an optimal transmission-aware solution must equal the
    positive part of its peak excess, max(lambda - expected, 0), in p.u.

    Raises:
        SolverError: a slack is off by more than ``tol``
    """
    s_base = problem.model.s_base
    peaks = problem.peaks
    for name, slack, peak, expected in (
        ("direct", peaks.slack_d, peaks.lambda_d, problem.expected_peaks[0]),
        ("reverse", peaks.slack_r, peaks.lambda_r, problem.expected_peaks[1]),
    ):
        excess = max(solution.value(peak) - expected / s_base, 0.0)
        value = solution.value(slack)
        if abs(value - excess) > tol:
            raise SolverError(f"{name} peak slack {value:.10g} differs from the peak excess {excess:.10g} "
                              f"at budget {problem.budget:.2f}")



def run_sweep(model, scenarios, config, reference_plan=None, log_path=None):
    """
    Solve the transmission-aware model at every budget of ``config``.

    Budget points are independent and solved on a thread pool; the curve is
    ordered by budget regardless of completion order.

    Raises:
        InfeasibleBudgetError: no budget admits a secure plan; the message
            names the scenario-based minimum cost
    """
    log = SweepLog(log_path)

    def one(budget):
        point = solve_point(model, scenarios, config, budget, reference_plan)
        log.write(point)
        logger.info("Budget %12.2f: %s, direct %s MW, reverse %s MW (%.1fs)", budget, point.status,
                    _fmt(point.lambda_d_mw), _fmt(point.lambda_r_mw), point.seconds)
        return point

    with ThreadPoolExecutor(max_workers=config.jobs) as executor:
        points = list(executor.map(one, config.budgets))

    if not any(p.feasible for p in points):
        if all(p.status == INFEASIBLE_BUDGET for p in points):
            min_cost = reference_plan.total_cost if reference_plan is not None else \
                min_secure_cost(model, scenarios, config.make_backend())[0]
            raise InfeasibleBudgetError(min_cost, config.budgets)
        logger.warning("[WARN] No budget point produced a plan (statuses: %s)",
                       ", ".join(sorted({p.status for p in points})))

    curve = NrccCurve(points=points, weight_w=config.weight_w, expected_peaks=config.expected_peaks,
                      reference_plan=reference_plan)
    if not curve.is_monotone():
        logger.warning("[WARN] NRCC is not monotone in the budget; check solver gap and time limit")
    return curve


def _fmt(value):
    return "-" if value is None else f"{value:.3f}"


# ------------------------------------------------------------------ dispersion


def add_dispersion(model, curve, heldout, config, planning):
    """
    Operate every curve plan on every held-out scenario, one scenario at a time.

    Fills ``curve.dispersion`` with one row per (budget, scenario). ``dominated``
    marks held-out scenarios bounded pointwise by a ``planning`` scenario;
    ``contained`` marks rows whose peaks stay inside the planned
    [-lambda_r, lambda_d] range. A dominated row that is not contained is
    logged, undominated rows are only reported.
    """
    dominated = heldout.dominated_by(planning)
    tasks = [(p, sid) for p in curve.feasible_points() for sid in heldout.scenario_ids]

    def one(task):
        point, sid = task
        evaluation = evaluate_plan(model, point.plan, heldout.single(sid), config.weight_w, config.make_backend())
        contained = bool(
            evaluation.feasible
            and evaluation.peak_direct_mw <= point.lambda_d_mw + SWEEP_TOLERANCE
            and evaluation.peak_reverse_mw <= point.lambda_r_mw + SWEEP_TOLERANCE
        )
        if dominated[sid] and not contained:
            logger.warning("[WARN] Held-out %s is dominated by the planning set but leaves the planned range "
                           "at budget %.2f", sid, point.budget)
        return {
            "gamma": point.budget,
            "plan_id": point.plan.plan_id,
            "scenario_id": sid,
            "feasible": evaluation.feasible,
            "peak_d_mw": evaluation.peak_direct_mw,
            "peak_r_mw": evaluation.peak_reverse_mw,
            "violations": len(evaluation.violations),
            "dominated": dominated[sid],
            "contained": contained,
        }

    with ThreadPoolExecutor(max_workers=config.jobs) as executor:
        rows = list(executor.map(one, tasks))
    curve.dispersion = pd.DataFrame(rows, columns=DISPERSION_COLUMNS)
    logger.info("Dispersion: %d evaluations, %d infeasible, %d of %d held-out scenarios dominated", len(rows),
                sum(not r["feasible"] for r in rows), sum(dominated.values()), len(dominated))
    return curve



def dispersion_summary(dispersion):
    """Per-budget min/max of the held-out peaks over feasible scenarios."""
    rows = []
    for gamma, group in dispersion.groupby("gamma", sort=True):
        ok = group[group["feasible"]]
        rows.append({
            "gamma": gamma,
            "d_min": ok["peak_d_mw"].min() if len(ok) else np.nan,
            "d_max": ok["peak_d_mw"].max() if len(ok) else np.nan,
            "r_min": ok["peak_r_mw"].min() if len(ok) else np.nan,
            "r_max": ok["peak_r_mw"].max() if len(ok) else np.nan,
            "n_scenarios": len(group),
            "n_infeasible": int((~group["feasible"].astype(bool)).sum()),
        })
    return pd.DataFrame(rows)
