import csv
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from conftest import shaped_scenarios, toy_scenarios
from grid.errors import InfeasibleBudgetError, SolverError
from grid.io import load_feeder
from nrcc.evaluate import evaluate_plan
from nrcc.sweep import (
    INFEASIBLE_BUDGET,
    SweepConfig,
    add_dispersion,
    budget_grid,
    check_positive_part,
    dispersion_summary,
    min_secure_cost,
    run_sweep,
    solve_point,
)
from planning.backends import OPTIMAL, solve
from planning.models import DEFAULT_WEIGHT_W, build_transmission_aware
from planning.plan import extract_plan

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def nominal(make_scenarios):
    return make_scenarios(nominal=1.0)


@pytest.fixture
def secure(model, nominal):
    cost, plan = min_secure_cost(model, nominal)
    assert plan is not None
    return cost, plan


def test_budget_grid():
    """Budgets run evenly from zero to a multiple of the minimum secure cost."""
    assert budget_grid(10.0, count=3, multiple=2.0) == (0.0, 10.0, 20.0)
    with pytest.raises(ValueError):
        budget_grid(10.0, count=1)


def test_sweep_config_sorts_and_checks():
    """Budgets are deduplicated and sorted; negatives and bad weights are refused."""
    assert SweepConfig(budgets=(5, 1, 5)).budgets == (1.0, 5.0)
    with pytest.raises(ValueError):
        SweepConfig(budgets=(-1.0,))
    with pytest.raises(ValueError):
        SweepConfig(budgets=(1.0,), weight_w=1.5)
    with pytest.raises(ValueError):
        SweepConfig(budgets=())


def test_all_budgets_below_minimum_cost_raise(model, nominal, secure):
    """A sweep with no secure budget names the minimum secure cost."""
    cost, _ = secure
    with pytest.raises(InfeasibleBudgetError) as info:
        run_sweep(model, nominal, SweepConfig(budgets=(0.0, 0.2 * cost)))
    assert info.value.min_cost == pytest.approx(cost, rel=1e-4)


def test_budget_below_minimum_is_flagged(model, nominal, secure):
    """An infeasible budget point carries its own status and no plan."""
    cost, _ = secure
    point = solve_point(model, nominal, SweepConfig(budgets=(0.0,)), 0.0)
    assert point.status == INFEASIBLE_BUDGET
    assert not point.feasible


def test_curve_is_monotone(model, nominal, secure, tmp_path):
    """More budget never raises either peak, and enough budget lowers the direct one."""
    cost, reference = secure
    budgets = (cost * 1.0001, 2.0 * cost, 5.0 * cost, 30.0 * cost)
    log = tmp_path / "sweep_log.csv"
    curve = run_sweep(model, nominal, SweepConfig(budgets=budgets, jobs=2), reference_plan=reference, log_path=log)
    points = curve.feasible_points()
    assert len(points) == 4
    assert curve.is_monotone()
    assert points[-1].lambda_d_mw < points[0].lambda_d_mw - 1e-3
    for point in points:
        assert point.plan.total_cost <= point.budget * (1 + 1e-6) + 1e-6
        assert point.line_savings == pytest.approx(reference.cost_lines - point.plan.cost_lines)

    frame = curve.frame()
    assert list(frame["gamma"]) == sorted(budgets)
    with open(log, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0][0] == "gamma"
    assert len(rows) == 5


def test_slacks_equal_positive_part(model, nominal, secure):
    """At the optimum each slack is the excess of its peak over the expected value."""
    cost, _ = secure
    for expected in ((0.9, 0.1), (0.2, 0.0), (5.0, 5.0)):
        problem = build_transmission_aware(model, nominal, 3.0 * cost, 0.5, expected)
        solution = solve(problem)
        assert solution.has_values
        lambda_d = solution.value(problem.peaks.lambda_d)
        lambda_r = solution.value(problem.peaks.lambda_r)
        assert solution.value(problem.peaks.slack_d) == pytest.approx(max(lambda_d - expected[0], 0.0), abs=1e-6)
        assert solution.value(problem.peaks.slack_r) == pytest.approx(max(lambda_r - expected[1], 0.0), abs=1e-6)
        plan = extract_plan(problem, solution)
        assert plan.peak_direct_mw == pytest.approx(lambda_d, abs=1e-6)
        assert plan.peak_reverse_mw == pytest.approx(lambda_r, abs=1e-6)


def test_slacks_equal_positive_part_over_random_solves(model):
    """Across 50 random transmission-aware solves each slack is the positive part of its excess."""
    rng = np.random.default_rng(6)
    weights = (0.25, 0.5, 0.75)
    for i in range(50):
        scale = rng.uniform(0.5, 1.5)
        scenarios = toy_scenarios(model, {"s": scale, "t": scale * rng.uniform(0.7, 1.0)})
        expected = (rng.uniform(0.0, 1.5), rng.uniform(0.0, 0.5))
        problem = build_transmission_aware(model, scenarios, rng.uniform(150.0, 400.0), weights[i % 3], expected)
        solution = solve(problem)
        assert solution.status == OPTIMAL
        for slack, peak, big in ((problem.peaks.slack_d, problem.peaks.lambda_d, expected[0]),
                                 (problem.peaks.slack_r, problem.peaks.lambda_r, expected[1])):
            assert abs(solution.value(slack) - max(solution.value(peak) - big, 0.0)) <= 1e-8
        check_positive_part(problem, solution)


def test_positive_part_check_rejects_loose_slack(model, nominal, secure):
    """A slack above the peak excess is reported as a solver error."""
    cost, _ = secure
    problem = build_transmission_aware(model, nominal, 3.0 * cost, 0.5, (0.2, 0.0))
    solution = solve(problem)
    values = solution.values.copy()
    values[problem.peaks.slack_d.index] += 1e-6
    with pytest.raises(SolverError):
        check_positive_part(problem, replace(solution, values=values))



def test_minimum_budget_reproduces_scenario_plan(model, nominal, secure):
    """At the minimum secure cost the curve point operates like the scenario-based plan."""
    cost, reference = secure
    point = solve_point(model, nominal, SweepConfig(budgets=(cost,)), cost * 1.0001)
    assert point.feasible
    evaluation = evaluate_plan(model, reference, nominal)
    w = DEFAULT_WEIGHT_W
    planned = w * point.lambda_d_mw + (1 - w) * point.lambda_r_mw
    realized = w * evaluation.peak_direct_mw + (1 - w) * evaluation.peak_reverse_mw
    assert planned == pytest.approx(realized, abs=1e-3)


def test_weight_steers_the_peaks(model, nominal, secure):
    """Weighting only the direct peak never leaves it above the reverse-only weighting."""
    cost, _ = secure
    direct = solve_point(model, nominal, SweepConfig(budgets=(1.0,), weight_w=1.0), 3.0 * cost)
    reverse = solve_point(model, nominal, SweepConfig(budgets=(1.0,), weight_w=0.0), 3.0 * cost)
    assert direct.lambda_d_mw <= reverse.lambda_d_mw + 1e-3
    assert reverse.lambda_r_mw <= direct.lambda_r_mw + 1e-3


def test_dispersion_over_heldout(model, make_scenarios, nominal, secure):
    """Every curve plan is operated on every held-out scenario; dominated ones stay inside the planned range."""
    cost, reference = secure
    config = SweepConfig(budgets=(cost * 1.0001, 5.0 * cost), jobs=2)
    curve = run_sweep(model, nominal, config, reference_plan=reference)
    heldout = make_scenarios(low=0.8, mid=1.0, high=1.3)
    add_dispersion(model, curve, heldout, config, nominal)

    dispersion = curve.dispersion
    assert len(dispersion) == 6
    assert set(dispersion["scenario_id"]) == {"low", "mid", "high"}
    assert set(dispersion[dispersion["dominated"]]["scenario_id"]) == {"low", "mid"}
    assert dispersion[dispersion["scenario_id"] == "low"]["feasible"].all()
    planned = {p.budget: p for p in curve.feasible_points()}
    eps = 1e-4
    for row in dispersion[dispersion["dominated"]].itertuples():
        point = planned[row.gamma]
        assert row.feasible
        assert -point.lambda_r_mw - eps <= -row.peak_r_mw
        assert row.peak_d_mw <= point.lambda_d_mw + eps
    assert dispersion[dispersion["dominated"]]["contained"].all()
    assert not dispersion["contained"][~dispersion["feasible"]].any()

    summary = dispersion_summary(dispersion)
    assert list(summary["n_scenarios"]) == [3, 3]
    plot = curve.plot_data()
    assert list(plot.columns) == ["gamma", "lambda_d", "lambda_r", "disp_lo", "disp_hi"]
    assert np.isfinite(plot["disp_hi"]).all()
    assert (plot["disp_lo"] <= 0).all()


def test_pointwise_dominance(make_scenarios, nominal):
    """Dominance is judged on netload entries, independent of any plan."""
    heldout = make_scenarios(low=0.8, mid=1.0, high=1.3, zero=0.0)
    assert heldout.dominated_by(nominal) == {"low": True, "mid": True, "high": False, "zero": True}
    p = np.array(heldout.netload_p)
    p[0, 2, 0, 1] += 0.2  # b2 above the planning netload at one hour
    bumped = replace(heldout, netload_p=p)
    assert not bumped.dominated_by(nominal)["low"]
    p = np.array(heldout.netload_p)
    p[0, 2, 0, 0] = -p[0, 2, 0, 0]  # export turned into import
    assert not replace(heldout, netload_p=p).dominated_by(nominal)["low"]


def test_plot_data_without_dispersion(model, nominal, secure):
    """Without held-out runs the dispersion columns are empty."""
    cost, _ = secure
    curve = run_sweep(model, nominal, SweepConfig(budgets=(2.0 * cost,)))
    plot = curve.plot_data()
    assert len(plot) == 1
    assert plot["disp_lo"].isna().all()


@pytest.fixture(scope="module")
def bundled():
    """The shipped feeder with an expected and a high-growth scenario, and its least-cost secure plan."""
    feeder = load_feeder(DATA / "feeder24.yaml")
    scenarios = shaped_scenarios(feeder, {"expected": (1.0, 0.9), "high": (1.5, 0.9)})
    cost, plan = min_secure_cost(feeder, scenarios)
    assert plan is not None
    return feeder, scenarios, cost, plan


@pytest.mark.slow
def test_budget_at_scenario_cost_reproduces_its_peaks(bundled):
    """With the budget at the scenario-based cost the curve point operates like that plan."""
    feeder, scenarios, cost, plan = bundled
    config = SweepConfig(budgets=(cost,))
    curve = run_sweep(feeder, scenarios, config, reference_plan=plan)
    point = curve.points[0]
    assert point.feasible
    evaluation = evaluate_plan(feeder, plan, scenarios)
    w = config.weight_w
    planned = w * point.lambda_d_mw + (1 - w) * point.lambda_r_mw
    realized = w * evaluation.peak_direct_mw + (1 - w) * evaluation.peak_reverse_mw
    eps = 2 * config.solver.mip_gap * max(evaluation.peak_direct_mw, evaluation.peak_reverse_mw, 1.0)
    assert abs(planned - realized) <= eps


@pytest.mark.slow
def test_curve_on_bundled_feeder_is_monotone_and_settles(bundled):
    """Over six budgets both peaks never rise, and they stop moving once the budget is slack."""
    feeder, scenarios, cost, plan = bundled
    config = SweepConfig(budgets=budget_grid(cost, count=6, multiple=5.0, start=cost), jobs=2)
    curve = run_sweep(feeder, scenarios, config, reference_plan=plan)
    points = curve.feasible_points()
    assert len(points) == 6
    eps = 2 * config.solver.mip_gap * max(points[0].lambda_d_mw, points[0].lambda_r_mw, 1.0)
    for a, b in zip(points, points[1:]):
        assert b.lambda_d_mw <= a.lambda_d_mw + eps
        assert b.lambda_r_mw <= a.lambda_r_mw + eps
    prev, last = points[-2], points[-1]
    if all(p.plan.total_cost < p.budget * (1 - 1e-6) for p in (prev, last)):
        assert abs(last.lambda_d_mw - prev.lambda_d_mw) < eps
        assert abs(last.lambda_r_mw - prev.lambda_r_mw) < eps
