import io
import os
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from grid.errors import ModelValidationError, ScenarioDataError
from grid.model import (
    DEFAULT_HYPERPLANES,
    BessCandidate,
    Bus,
    Corridor,
    GridModel,
    LineOption,
    RegulatorCandidate,
    TimeStructure,
)
from grid.scenarios import ScenarioSet
from grid.validation import DANGLING, ValidationReport, validate

FLOAT_FORMAT = "%.9f"
NETLOAD_COLUMNS = ["scenario", "bus", "day", "hour", "p_mw", "q_mvar"]


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def frame_to_csv_text(df):
    buffer = io.StringIO()
    df.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


# ---------------------------------------------------------------- feeder document


def _squared(entry, key, default):
    if f"{key}_sq" in entry:
        return float(entry[f"{key}_sq"])
    return float(entry.get(key, default)) ** 2


def parse_feeder(document):
    """
    Build a GridModel from a parsed feeder document (see data/feeder24.yaml).

    Returns:
        (GridModel, ValidationReport): the report holds parse-level problems
        merged with ``validate(model)``
    """
    report = ValidationReport()
    s_base = float(document.get("s_base_mva", 1.0))
    defaults = document.get("defaults", {})
    vmin = defaults.get("vmin", 0.95)
    vmax = defaults.get("vmax", 1.05)

    regulators = {str(r["bus"]): r for r in document.get("regulators", [])}
    bus_ids = {str(b["id"]) for b in document.get("buses", [])}
    for reg_bus in regulators:
        if reg_bus not in bus_ids:
            report.add(DANGLING, reg_bus, "regulator placed at unknown bus")

    buses = []
    for entry in document.get("buses", []):
        bus_id = str(entry["id"])
        reg = regulators.get(bus_id)
        existing = bool(reg and reg.get("existing", False))
        candidate = None
        ratio_lo, ratio_hi = 0.9 ** 2, 1.1 ** 2
        if reg is not None:
            ratio_lo = _squared(reg, "ratio_min", 0.9)
            ratio_hi = _squared(reg, "ratio_max", 1.1)
            if not existing:
                candidate = RegulatorCandidate(
                    cost=float(reg.get("cost", 0.0)),
                    ratio_min_sq=ratio_lo,
                    ratio_max_sq=ratio_hi,
                    big_m=reg.get("big_m"),
                )
        buses.append(Bus(
            id=bus_id,
            vmin_sq=_squared(entry, "vmin", vmin),
            vmax_sq=_squared(entry, "vmax", vmax),
            has_existing_regulator=existing,
            regulator_candidate=candidate,
            is_poi=bool(entry.get("poi", False)),
            existing_ratio_min_sq=ratio_lo,
            existing_ratio_max_sq=ratio_hi,
            peak_mw=float(entry.get("peak_mw", 0.0)),
            power_factor=float(entry.get("pf", 0.95)),
        ))

    options_by_corridor = {}
    corridor_ids = {str(c["id"]) for c in document.get("corridors", [])}
    for entry in document.get("line_options", []):
        corridor_id = str(entry["corridor"])
        if corridor_id not in corridor_ids:
            report.add(DANGLING, entry.get("id", "?"), f"line option references unknown corridor {corridor_id!r}")
            continue
        options_by_corridor.setdefault(corridor_id, []).append(LineOption(
            id=str(entry["id"]),
            cost=float(entry.get("cost", 0.0)),
            resistance=float(entry["r"]),
            reactance=float(entry["x"]),
            capacity=float(entry["capacity_mva"]) / s_base,
            big_m=entry.get("big_m"),
            baseline=bool(entry.get("baseline", False)),
        ))

    corridors = tuple(
        Corridor(
            id=str(entry["id"]),
            from_bus=str(entry["from"]),
            to_bus=str(entry["to"]),
            options=tuple(options_by_corridor.get(str(entry["id"]), ())),
        )
        for entry in document.get("corridors", [])
    )

    bess = tuple(
        BessCandidate(
            id=str(entry.get("id", f"bess_{entry['bus']}")),
            bus=str(entry["bus"]),
            unit_cost=float(entry["unit_cost_per_mw"]),
            eff_charge=float(entry.get("eff_charge", 0.95)),
            eff_discharge=float(entry.get("eff_discharge", 0.95)),
            duration_ratio=float(entry.get("duration_h", 4.0)),
            max_capacity=float(entry["max_mw"]),
        )
        for entry in document.get("bess_candidates", [])
    )

    limit = document.get("substation_limit_mva")
    model = GridModel(
        buses=tuple(buses),
        corridors=corridors,
        bess_candidates=bess,
        time=TimeStructure(hours_per_day=int(document.get("hours_per_day", 24))),
        s_base=s_base,
        hyperplane_count=int(document.get("hyperplanes", DEFAULT_HYPERPLANES)),
        v_ref_sq=float(document.get("v_ref", 1.0)) ** 2,
        substation_limit=None if limit is None else float(limit) / s_base,
        name=str(document.get("name", "feeder")),
    )
    report.violations.extend(validate(model).violations)
    return model, report


def load_feeder(path, check=True):
    with open(path, encoding="utf-8") as f:
        document = yaml.safe_load(f)
    model, report = parse_feeder(document)
    if check and not report.ok:
        raise ModelValidationError(report)
    return model


def feeder_document(model):
    """Inverse of ``parse_feeder`` (capacities back in MVA)."""
    regulators = []
    for bus in model.buses:
        if bus.has_existing_regulator:
            regulators.append({"bus": bus.id, "existing": True,
                               "ratio_min_sq": bus.existing_ratio_min_sq,
                               "ratio_max_sq": bus.existing_ratio_max_sq})
        elif bus.regulator_candidate is not None:
            rc = bus.regulator_candidate
            entry = {"bus": bus.id, "cost": rc.cost,
                     "ratio_min_sq": rc.ratio_min_sq, "ratio_max_sq": rc.ratio_max_sq}
            if rc.big_m is not None:
                entry["big_m"] = rc.big_m
            regulators.append(entry)
    line_options = []
    for c in model.corridors:
        for o in c.options:
            entry = {"id": o.id, "corridor": c.id, "baseline": o.baseline, "cost": o.cost,
                     "r": o.resistance, "x": o.reactance, "capacity_mva": o.capacity * model.s_base}
            if o.big_m is not None:
                entry["big_m"] = o.big_m
            line_options.append(entry)
    return {
        "name": model.name,
        "s_base_mva": model.s_base,
        "hyperplanes": model.hyperplane_count,
        "v_ref": float(np.sqrt(model.v_ref_sq)),
        "substation_limit_mva": None if model.substation_limit is None else model.substation_limit * model.s_base,
        "hours_per_day": model.time.hours_per_day,
        "buses": [{"id": b.id, "poi": b.is_poi, "vmin_sq": b.vmin_sq, "vmax_sq": b.vmax_sq,
                   "peak_mw": b.peak_mw, "pf": b.power_factor} for b in model.buses],
        "corridors": [{"id": c.id, "from": c.from_bus, "to": c.to_bus} for c in model.corridors],
        "line_options": line_options,
        "bess_candidates": [{"id": b.id, "bus": b.bus, "unit_cost_per_mw": b.unit_cost,
                             "eff_charge": b.eff_charge, "eff_discharge": b.eff_discharge,
                             "duration_h": b.duration_ratio, "max_mw": b.max_capacity}
                            for b in model.bess_candidates],
        "regulators": regulators,
    }


def dump_feeder(model, path):
    return atomic_write_text(path, yaml.safe_dump(feeder_document(model), sort_keys=False))


# ---------------------------------------------------------------- netload files


def labels_path(path):
    path = Path(path)
    return path.with_name(f"{path.stem}_labels.csv")


def write_scenario_set(scenarios, path):
    """Columnar netload file plus a ``<stem>_labels.csv`` sidecar."""
    k, n, d, h = scenarios.netload_p.shape
    grid = np.indices((k, n, d, h)).reshape(4, -1)
    df = pd.DataFrame({
        "scenario": np.asarray(scenarios.scenario_ids, dtype=object)[grid[0]],
        "bus": np.asarray(scenarios.bus_ids, dtype=object)[grid[1]],
        "day": np.asarray(scenarios.time.day_ids)[grid[2]],
        "hour": grid[3],
        "p_mw": scenarios.netload_p.reshape(-1),
        "q_mvar": scenarios.netload_q.reshape(-1),
    })
    labels = pd.DataFrame([
        {
            "scenario": sid,
            "load_growth_rate": scenarios.labels.get(sid, {}).get("load_growth_rate"),
            "adoption": scenarios.labels.get(sid, {}).get("adoption"),
            "run": scenarios.labels.get(sid, {}).get("run"),
            "expected": sid == scenarios.expected,
        }
        for sid in scenarios.scenario_ids
    ])
    atomic_write_text(path, frame_to_csv_text(df))
    atomic_write_text(labels_path(path), frame_to_csv_text(labels))
    return Path(path)


def read_scenario_set(path, hours_per_day=None):
    path = Path(path)
    if not path.exists():
        raise ScenarioDataError(f"netload file not found: {path}")
    df = pd.read_csv(path, dtype={"scenario": str, "bus": str})
    missing = set(NETLOAD_COLUMNS) - set(df.columns)
    if missing:
        raise ScenarioDataError(f"{path}: missing columns {sorted(missing)}")

    scenario_ids = tuple(pd.unique(df["scenario"]))
    bus_ids = tuple(pd.unique(df["bus"]))
    day_ids = tuple(int(d) for d in sorted(pd.unique(df["day"])))
    hours = int(df["hour"].max()) + 1 if hours_per_day is None else hours_per_day
    bad_hours = df.loc[(df["hour"] < 0) | (df["hour"] >= hours), "hour"]
    if not bad_hours.empty:
        raise ScenarioDataError(f"{path}: hour {int(bad_hours.iloc[0])} outside 0..{hours - 1}")
    shape = (len(scenario_ids), len(bus_ids), len(day_ids), hours)
    if len(df) != int(np.prod(shape)):
        raise ScenarioDataError(f"{path}: {len(df)} rows but a dense set needs {int(np.prod(shape))}")

    k = df["scenario"].map({s: i for i, s in enumerate(scenario_ids)}).to_numpy()
    n = df["bus"].map({b: i for i, b in enumerate(bus_ids)}).to_numpy()
    d = df["day"].map({day: i for i, day in enumerate(day_ids)}).to_numpy()
    h = df["hour"].to_numpy()
    p = np.full(shape, np.nan)
    q = np.full(shape, np.nan)
    p[k, n, d, h] = df["p_mw"].to_numpy()
    q[k, n, d, h] = df["q_mvar"].to_numpy()
    if np.isnan(p).any() or np.isnan(q).any():
        raise ScenarioDataError(f"{path}: netload array is not dense (duplicate or missing rows)")

    labels, expected = {}, None
    if labels_path(path).exists():
        ldf = pd.read_csv(labels_path(path), dtype={"scenario": str})
        for row in ldf.to_dict("records"):
            labels[row["scenario"]] = {
                "load_growth_rate": None if pd.isna(row["load_growth_rate"]) else float(row["load_growth_rate"]),
                "adoption": None if pd.isna(row["adoption"]) else str(row["adoption"]),
                "run": None if pd.isna(row["run"]) else int(row["run"]),
            }
            if bool(row["expected"]):
                expected = row["scenario"]

    return ScenarioSet(
        scenario_ids=scenario_ids,
        bus_ids=bus_ids,
        time=TimeStructure(hours_per_day=hours, day_ids=day_ids),
        netload_p=p,
        netload_q=q,
        labels=labels,
        expected=expected,
    )
