import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from grid.errors import PowerFlowError
from nrcc.evaluate import evaluate_plan
from planning.models import DEFAULT_WEIGHT_W
from powerflow.sweep import DEFAULT_MAX_ITER, DEFAULT_TOLERANCE, OperatingPoint, backward_forward_sweep

logger = logging.getLogger(__name__)

POI_MISMATCH_WARNING = 0.05
LIMIT_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class ViolationReport:
    """AC check of one plan: per-line loading, per-bus voltages and their violations."""
    plan_id: str
    n_points: int
    max_iterations: int
    max_residual: float
    line_loading: pd.DataFrame
    bus_voltage: pd.DataFrame
    overloads: pd.DataFrame
    voltage_violations: pd.DataFrame
    peak_hour: pd.DataFrame
    poi_mismatch: float | None = None
    voltage_gap: float | None = None

    @property
    def ok(self):
        return self.overloads.empty and self.voltage_violations.empty

    def violations_frame(self):
        lines = self.overloads.assign(kind="line overload", element=self.overloads["line_id"],
                                      value=self.overloads["max_loading_pu"])
        buses = self.voltage_violations.assign(kind="voltage limit", element=self.voltage_violations["bus"],
                                               value=self.voltage_violations["v_worst"])
        cols = ["kind", "element", "value", "scenario", "day", "hour"]
        return pd.concat([lines[cols], buses[cols]], ignore_index=True)


def operating_points(model, plan, scenarios, schedules=None):
    """
    One OperatingPoint batch covering every (scenario, day, hour) of ``scenarios``.

    BESS injections and regulator ratios come from ``schedules`` (scenario id ->
    OperatingSchedule); ratios are clamped to each regulator's range. Without
    a schedule, BESS stay idle and regulators sit at ratio 1.
    """
    schedules = schedules or {}
    topo = model.topology
    order = topo.order
    pos = {bus: i for i, bus in enumerate(order)}
    options = {o.id: o for o in model.options}
    n_bus = len(order)

    parent = np.full(n_bus, -1, dtype=int)
    impedance = np.zeros(n_bus, dtype=complex)
    capacity = np.full(n_bus, np.inf)
    for bus in order[1:]:
        corridor = topo.corridor_to[bus]
        option = options[plan.lines[corridor.id]]
        parent[pos[bus]] = pos[topo.parent[bus]]
        impedance[pos[bus]] = complex(option.resistance, option.reactance)
        capacity[pos[bus]] = option.capacity

    rows = [scenarios.bus_index[bus] for bus in order]
    load = (scenarios.netload_p[:, rows] + 1j * scenarios.netload_q[:, rows]) / model.s_base  # (K, N, D, H)
    injection = -load
    k, _, d, h = load.shape
    ratio = np.ones((k, n_bus, d, h))

    installed = set(plan.regulators)
    regulated = {b.id: b.ratio_bounds() for b in model.buses
                 if b.id != topo.root and (b.has_existing_regulator or b.id in installed)}
    missing = []
    for ki, sid in enumerate(scenarios.scenario_ids):
        schedule = schedules.get(sid)
        if schedule is None:
            missing.append(sid)
            continue
        if tuple(schedule.day_ids) != tuple(scenarios.time.day_ids):
            raise PowerFlowError(f"schedule of {sid} covers days {schedule.day_ids}, "
                                 f"scenarios cover {scenarios.time.day_ids}")
        bess_bus = {b.id: b.bus for b in model.bess_candidates}
        for i, bid in enumerate(schedule.bess_ids):
            injection[ki, pos[bess_bus[bid]]] += (schedule.bess_p[i] + 1j * schedule.bess_q[i]) / model.s_base
        for i, bus in enumerate(schedule.reg_bus_ids):
            if bus in regulated:
                lo, hi = regulated[bus]
                ratio[ki, pos[bus]] = np.clip(schedule.reg_ratio[i], np.sqrt(lo), np.sqrt(hi))
    if missing and any(mw > 0 for mw in plan.bess_mw.values()):
        logger.warning("[WARN] No dispatch for %d scenarios; their BESS are left idle", len(missing))

    labels = tuple((sid, day, hour) for sid in scenarios.scenario_ids
                   for day in scenarios.time.day_ids for hour in range(h))
    return OperatingPoint(
        bus_ids=tuple(order),
        parent=parent,
        impedance=impedance,
        capacity=capacity,
        injection=injection.transpose(0, 2, 3, 1).reshape(-1, n_bus),
        ratio=ratio.transpose(0, 2, 3, 1).reshape(-1, n_bus),
        v_root=float(np.sqrt(model.v_ref_sq)),
        labels=labels,
    )


def resolve_schedules(model, plan, scenarios, schedules=None, weight_w=DEFAULT_WEIGHT_W, backend=None):
    """
    Dispatch to replay in the AC check, one schedule per scenario.

    Schedules given (or stored with the plan) are used when they cover the
    scenario days; the remaining scenarios get their dispatch from operating
    the plan on them. A plan without BESS or regulation needs no dispatch.
    """
    known = dict(plan.schedules if schedules is None else schedules)
    days = tuple(scenarios.time.day_ids)
    usable = {sid: s for sid, s in known.items()
              if sid in scenarios.scenario_index and tuple(s.day_ids) == days}
    missing = [sid for sid in scenarios.scenario_ids if sid not in usable]
    controllable = any(mw > 0 for mw in plan.bess_mw.values()) or plan.regulators \
        or any(b.has_existing_regulator and not b.is_poi for b in model.buses)
    if missing and controllable:
        logger.info("Deriving dispatch for %d scenarios the plan was not solved on", len(missing))
        evaluation = evaluate_plan(model, plan, scenarios.subset(missing), weight_w, backend)
        if not evaluation.schedules:
            logger.warning("[WARN] Plan %s cannot be operated on %s (status %s)",
                           plan.plan_id, ",".join(missing), evaluation.status)
        usable.update(evaluation.schedules)
    return usable


def validate_plan(model, plan, scenarios, schedules=None, loading_threshold=1.0,
                  tol=DEFAULT_TOLERANCE, max_iter=DEFAULT_MAX_ITER, weight_w=DEFAULT_WEIGHT_W, backend=None):
    """
    Run the AC power flow for a plan over every scenario hour.

    Raises:
        PowerFlowError: some points did not converge or diverged
    Returns:
        ViolationReport
    """
    model = model.with_days(scenarios.time.day_ids)
    schedules = resolve_schedules(model, plan, scenarios, schedules, weight_w, backend)
    point = operating_points(model, plan, scenarios, schedules)
    result = backward_forward_sweep(point, tol=tol, max_iter=max_iter)
    failed = np.flatnonzero(~result.converged)
    if failed.size:
        first = ", ".join(f"{point.labels[i]}" for i in failed[:3])
        raise PowerFlowError(f"{failed.size} of {point.n_points} power-flow points failed to converge "
                             f"({int(result.diverged.sum())} diverged), e.g. {first}")

    topo = model.topology
    order = point.bus_ids
    labels = point.labels

    line_rows = []
    for n, bus in enumerate(order):
        if n == 0:
            continue
        corridor = topo.corridor_to[bus]
        worst = int(np.argmax(result.loading[:, n]))
        sid, day, hour = labels[worst]
        line_rows.append({"line_id": corridor.id, "option": plan.lines[corridor.id],
                          "max_loading_pu": float(result.loading[worst, n]),
                          "scenario": sid, "day": day, "hour": hour})
    line_loading = pd.DataFrame(line_rows, columns=["line_id", "option", "max_loading_pu", "scenario", "day", "hour"])

    vmag = np.abs(result.voltage)
    bus_rows = []
    for n, bus_id in enumerate(order):
        bus = model.bus_by_id[bus_id]
        lo, hi = np.sqrt(bus.vmin_sq), np.sqrt(bus.vmax_sq)
        i_min, i_max = int(np.argmin(vmag[:, n])), int(np.argmax(vmag[:, n]))
        v_min, v_max = float(vmag[i_min, n]), float(vmag[i_max, n])
        low = v_min < lo - LIMIT_TOLERANCE
        worst = i_min if low or (v_max <= hi + LIMIT_TOLERANCE and lo - v_min >= v_max - hi) else i_max
        sid, day, hour = labels[worst]
        bus_rows.append({"bus": bus_id, "v_min": v_min, "v_max": v_max, "limit_min": lo, "limit_max": hi,
                         "violated": low or v_max > hi + LIMIT_TOLERANCE,
                         "v_worst": float(vmag[worst, n]), "scenario": sid, "day": day, "hour": hour})
    bus_voltage = pd.DataFrame(bus_rows)

    overloads = line_loading[line_loading["max_loading_pu"] > loading_threshold + LIMIT_TOLERANCE]
    overloads = overloads.sort_values("max_loading_pu", ascending=False, kind="stable").reset_index(drop=True)
    voltage_violations = bus_voltage[bus_voltage["violated"]].reset_index(drop=True)

    import_p = result.root_power.real * model.s_base
    peak = int(np.argmax(import_p))
    sid, day, hour = labels[peak]
    peak_hour = pd.DataFrame({
        "line_id": [topo.corridor_to[bus].id for bus in order[1:]],
        "loading_pu": result.loading[peak, 1:],
        "scenario": sid, "day": day, "hour": hour,
    })

    poi_mismatch = voltage_gap = None
    if schedules:
        poi_mismatch, voltage_gap = _compare_with_schedules(model, scenarios, schedules, point, result, import_p)

    report = ViolationReport(
        plan_id=plan.plan_id,
        n_points=point.n_points,
        max_iterations=int(result.iterations.max()) if point.n_points else 0,
        max_residual=float(result.residual.max()) if point.n_points else 0.0,
        line_loading=line_loading,
        bus_voltage=bus_voltage,
        overloads=overloads,
        voltage_violations=voltage_violations,
        peak_hour=peak_hour,
        poi_mismatch=poi_mismatch,
        voltage_gap=voltage_gap,
    )
    logger.info("AC check of %s: %d points, %d overloaded lines, %d voltage violations (max residual %.2e)",
                plan.plan_id, report.n_points, len(overloads), len(voltage_violations), report.max_residual)
    return report


def _compare_with_schedules(model, scenarios, schedules, point, result, import_p):
    """PoI import mismatch (fraction of the peak) and squared-voltage gap against the MILP dispatch."""
    hours = scenarios.time.hours_per_day
    per_scenario = scenarios.time.n_days * hours
    mismatch, peak, gap = 0.0, 0.0, 0.0
    order_rows = [model.bus_index[b] for b in point.bus_ids]
    for ki, sid in enumerate(scenarios.scenario_ids):
        schedule = schedules.get(sid)
        if schedule is None:
            continue
        ac = import_p[ki * per_scenario:(ki + 1) * per_scenario]
        milp = schedule.rho_p.reshape(-1)
        mismatch = max(mismatch, float(np.abs(ac - milp).max()))
        peak = max(peak, float(np.abs(milp).max()))
        if schedule.v_sq.size:
            v_sq = np.abs(result.voltage[ki * per_scenario:(ki + 1) * per_scenario]) ** 2
            lin = schedule.v_sq[order_rows].transpose(1, 2, 0).reshape(-1, len(order_rows))
            gap = max(gap, float(np.abs(v_sq - lin).max()))
    fraction = mismatch / peak if peak > 0 else 0.0
    if fraction > POI_MISMATCH_WARNING:
        logger.warning("[WARN] PoI mismatch: AC import differs from the planned exchange by %.1f%% of the peak",
                       100.0 * fraction)
    return fraction, gap
