from pathlib import Path

import numpy as np
import pytest

from conftest import shaped_scenarios
from grid.errors import PowerFlowError
from grid.io import load_feeder
from nrcc.evaluate import evaluate_plan
from planning.backends import solve
from planning.models import build_deterministic, build_scenario_based
from planning.plan import InvestmentPlan, extract_plan
from powerflow.sweep import OperatingPoint, backward_forward_sweep
from powerflow.validate import operating_points, validate_plan

DATA = Path(__file__).resolve().parent.parent / "data"


def chain(loads, r=0.01, x=0.0, ratio=None):
    """A radial chain root-1-2-...; ``loads`` is (P, N-1) complex demand."""
    loads = np.atleast_2d(np.asarray(loads, dtype=complex))
    n_bus = loads.shape[1] + 1
    injection = np.zeros((loads.shape[0], n_bus), dtype=complex)
    injection[:, 1:] = -loads
    return OperatingPoint(
        bus_ids=tuple(f"n{i}" for i in range(n_bus)),
        parent=np.arange(-1, n_bus - 1),
        impedance=np.full(n_bus, complex(r, x)),
        capacity=np.full(n_bus, 2.0),
        injection=injection,
        ratio=np.ones_like(injection.real) if ratio is None else ratio,
    )


def toy_plan(upgrade=False):
    return InvestmentPlan(
        lines={"c01": "c01-up" if upgrade else "c01-base", "c12": "c12-base", "c13": "c13-base"},
        bess_mw={"bess-b2": 0.0}, regulators=(),
        cost_lines=100.0 if upgrade else 0.0, cost_bess=0.0, cost_regulators=0.0,
    )


def test_two_bus_closed_form():
    """With R only and unit load the receiving voltage solves V^2 - V + RP = 0."""
    result = backward_forward_sweep(chain([[1.0]]))
    assert result.converged.all()
    assert result.voltage[0, 1].real == pytest.approx((1.0 + np.sqrt(0.96)) / 2.0, abs=1e-8)
    assert abs(result.voltage[0, 1].imag) < 1e-12


def test_lossless_lines_keep_flat_profile():
    """Zero impedance leaves every bus at the root voltage."""
    result = backward_forward_sweep(chain([[0.5 + 0.2j, 0.3, 0.1j]], r=0.0))
    assert np.allclose(result.voltage, 1.0)
    assert result.root_power[0] == pytest.approx(0.8 + 0.3j)


def test_no_load_converges_immediately():
    """An unloaded feeder is already at its fixed point."""
    result = backward_forward_sweep(chain([[0.0, 0.0]]))
    assert result.iterations[0] == 1
    assert result.residual[0] == 0.0


def test_loose_voltage_tolerance_does_not_hide_mismatch():
    """A point whose bus power mismatch stays above the residual tolerance is not converged."""
    loose = backward_forward_sweep(chain([[1.0]]), tol=1e-2)
    assert loose.residual[0] > 1e-7
    assert not loose.converged[0]
    assert not loose.diverged[0]
    tight = backward_forward_sweep(chain([[1.0]]))
    assert tight.converged[0]
    assert tight.residual[0] <= 1e-7


def test_leaf_voltage_falls_as_load_grows():
    """Scaling every load up lowers the voltage at the end of the feeder."""
    scales = np.linspace(0.0, 2.0, 9)
    loads = scales[:, None] * np.full((1, 3), 0.2 + 0.05j)
    result = backward_forward_sweep(chain(loads, r=0.02, x=0.02))
    assert result.converged.all()
    leaf = np.abs(result.voltage[:, -1])
    assert (np.diff(leaf) < 0).all()



def test_regulator_scales_voltage():
    """A regulator ratio multiplies the voltage downstream of it."""
    ratio = np.array([[1.0, 1.05]])
    result = backward_forward_sweep(chain([[0.0]], ratio=ratio))
    assert abs(result.voltage[0, 1]) == pytest.approx(1.05)


def test_voltage_falls_along_loaded_chain():
    """Voltage magnitudes decrease away from the root and losses add to the root import."""
    loads = [[0.2 + 0.05j, 0.2 + 0.05j, 0.2 + 0.05j]]
    result = backward_forward_sweep(chain(loads, r=0.02, x=0.02))
    vmag = np.abs(result.voltage[0])
    assert (np.diff(vmag) < 0).all()
    assert result.root_power[0].real > 0.6
    assert result.residual[0] < 1e-7
    assert (result.s_send[0, 1:].real >= result.s_receive[0, 1:].real).all()


def test_collapse_is_isolated_to_its_point():
    """An overloaded point diverges without affecting the others in the batch."""
    result = backward_forward_sweep(chain([[1.0], [30.0]]))
    assert result.converged.tolist() == [True, False]
    assert result.diverged[1]
    assert result.voltage[0, 1].real == pytest.approx((1.0 + np.sqrt(0.96)) / 2.0, abs=1e-8)


def test_operating_points_follow_the_plan(model, make_scenarios):
    """Impedances come from the selected options and points cover every hour."""
    point = operating_points(model, toy_plan(upgrade=True), make_scenarios(low=0.5, high=1.0))
    assert point.bus_ids[0] == "b0"
    assert point.n_points == 8
    assert point.labels[4] == ("high", 0, 0)
    b1 = point.bus_ids.index("b1")
    assert point.impedance[b1] == complex(0.005, 0.005)
    assert point.capacity[b1] == 2.0
    assert (point.ratio == 1.0).all()


def test_upgraded_plan_passes(model, make_scenarios):
    """With the head corridor upgraded the nominal load is served within limits."""
    report = validate_plan(model, toy_plan(upgrade=True), make_scenarios(nominal=1.0))
    assert report.ok
    assert report.n_points == 4
    assert report.max_residual < 1e-7
    assert len(report.line_loading) == 3
    assert report.poi_mismatch is None
    assert report.violations_frame().empty


def test_baseline_plan_overloads_head_corridor(model, make_scenarios):
    """The baseline feeder overloads the head corridor under heavier load."""
    report = validate_plan(model, toy_plan(), make_scenarios(heavy=1.5))
    assert not report.ok
    assert report.overloads["line_id"].iloc[0] == "c01"
    assert report.overloads["hour"].iloc[0] == 2
    loading = list(report.overloads["max_loading_pu"])
    assert loading == sorted(loading, reverse=True)
    assert loading[0] > 1.5
    assert report.voltage_violations.empty
    assert set(report.violations_frame()["kind"]) == {"line overload"}


def test_loading_threshold_hides_overloads(model, make_scenarios):
    """Overloads are judged against the configured loading threshold."""
    report = validate_plan(model, toy_plan(), make_scenarios(heavy=1.5), loading_threshold=5.0)
    assert report.overloads.empty


def test_collapse_raises(model, make_scenarios):
    """Loads far beyond the feeder's transfer limit abort validation."""
    with pytest.raises(PowerFlowError):
        validate_plan(model, toy_plan(), make_scenarios(collapse=100.0))


def test_planned_dispatch_is_replayed(model, make_scenarios):
    """A solved plan is checked with its own storage dispatch and compared with the planned exchange."""
    scenarios = make_scenarios(nominal=1.0)
    problem = build_scenario_based(model, scenarios)
    plan = extract_plan(problem, solve(problem))
    report = validate_plan(model, plan, scenarios)
    assert report.poi_mismatch is not None
    assert report.poi_mismatch < 0.1
    assert report.voltage_gap < 0.05
    assert report.max_residual < 1e-7


@pytest.mark.slow
def test_linear_voltages_match_ac_at_light_load():
    """On the bundled feeder at under 20 % loading the planned squared voltages track the AC solution."""
    feeder = load_feeder(DATA / "feeder24.yaml")
    scenarios = shaped_scenarios(feeder, {"light": (0.2, 0.0)})
    problem = build_scenario_based(feeder, scenarios)
    plan = extract_plan(problem, solve(problem))
    report = validate_plan(feeder, plan, scenarios)
    assert report.line_loading["max_loading_pu"].max() <= 0.2
    assert report.overloads.empty
    assert report.voltage_gap is not None
    assert report.voltage_gap <= 1e-2


@pytest.mark.slow
def test_deterministic_plan_fails_high_growth_on_bundled_feeder():
    """The expected-scenario plan breaks line ratings under high growth; the scenario-based plan does not."""
    feeder = load_feeder(DATA / "feeder24.yaml")
    scenarios = shaped_scenarios(feeder, {"expected": (1.0, 0.9), "high": (1.5, 0.9)})
    high = scenarios.single("high")
    det_problem = build_deterministic(feeder, scenarios)
    det = extract_plan(det_problem, solve(det_problem))
    sb_problem = build_scenario_based(feeder, scenarios)
    sb = extract_plan(sb_problem, solve(sb_problem))
    assert sb.total_cost > det.total_cost

    assert not evaluate_plan(feeder, det, high).feasible
    det_report = validate_plan(feeder, det, high)
    assert (det_report.line_loading["max_loading_pu"] > 1.0).any()
    assert not det_report.overloads.empty

    assert evaluate_plan(feeder, sb, high).feasible
    sb_report = validate_plan(feeder, sb, high)
    assert (sb_report.line_loading["max_loading_pu"] <= 1.0).all()
    assert sb_report.overloads.empty
