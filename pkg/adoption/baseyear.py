"""
Base-year hourly load and per-unit PV profile.

The synthetic generator stands in for metered data: a residential daily shape
with morning and evening peaks scaled by a summer-peaking seasonal factor and
multiplicative noise, and a clear-sky PV bell with seasonal amplitude and
random cloudy days.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from grid.errors import ScenarioDataError
from grid.io import atomic_write_text, frame_to_csv_text

DAYS_PER_YEAR = 365


@dataclass(frozen=True, eq=False)
class BaseYear:
    bus_ids: tuple[str, ...]
    day_ids: tuple[int, ...]
    load_p: np.ndarray  # (bus, day, hour) MW
    load_q: np.ndarray  # (bus, day, hour) MVAr
    pv_profile: np.ndarray  # (day, hour) per unit of installed capacity

    @property
    def hours_per_day(self):
        return self.load_p.shape[-1]

    def bus_rows(self, bus_ids):
        index = {b: i for i, b in enumerate(self.bus_ids)}
        missing = [b for b in bus_ids if b not in index]
        if missing:
            raise ScenarioDataError(f"base-year series missing for buses {missing}")
        return [index[b] for b in bus_ids]


def synthetic_base_year(model, seed=0, days=DAYS_PER_YEAR):
    """
    Deterministic synthetic year for every bus of ``model``.

    Bus peaks come from ``Bus.peak_mw``; reactive load follows the bus power factor.
    """
    rng = np.random.default_rng(seed)
    hours = model.time.hours_per_day
    h = np.arange(hours) * 24.0 / hours
    d = np.arange(days)

    shape = 0.45 + 0.25 * np.exp(-((h - 8.0) / 2.5) ** 2) + 0.55 * np.exp(-((h - 19.0) / 3.0) ** 2)
    shape = shape / shape.max()
    seasonal = 0.78 + 0.22 * np.cos(2.0 * np.pi * (d - 200) / DAYS_PER_YEAR)
    daily = seasonal * (1.0 + 0.04 * rng.standard_normal(days))

    n_bus = len(model.buses)
    noise = 1.0 + 0.03 * rng.standard_normal((n_bus, days, hours))
    peaks = np.array([bus.peak_mw for bus in model.buses])
    load_p = np.clip(peaks[:, None, None] * daily[None, :, None] * shape[None, None, :] * noise, 0.0, None)
    tan_phi = np.tan(np.arccos(np.array([bus.power_factor for bus in model.buses])))
    load_q = load_p * tan_phi[:, None, None]

    clear = np.clip(np.sin(np.pi * (h - 6.0) / 12.0), 0.0, None) ** 1.2
    season_pv = 0.75 + 0.25 * np.cos(2.0 * np.pi * (d - 172) / DAYS_PER_YEAR)
    cloudy = rng.random(days) < 0.3
    cloud = np.where(cloudy, rng.uniform(0.3, 0.8, days), rng.uniform(0.9, 1.0, days))
    pv_profile = np.clip(season_pv[:, None] * cloud[:, None] * clear[None, :], 0.0, 1.0)

    return BaseYear(
        bus_ids=tuple(bus.id for bus in model.buses),
        day_ids=tuple(int(x) for x in d),
        load_p=load_p,
        load_q=load_q,
        pv_profile=pv_profile,
    )


def write_base_year(base, load_path, pv_path):
    n, days, hours = base.load_p.shape
    grid = np.indices((n, days, hours)).reshape(3, -1)
    loads = pd.DataFrame({
        "bus": np.asarray(base.bus_ids, dtype=object)[grid[0]],
        "day": np.asarray(base.day_ids)[grid[1]],
        "hour": grid[2],
        "p_mw": base.load_p.reshape(-1),
        "q_mvar": base.load_q.reshape(-1),
    })
    dgrid = np.indices((days, hours)).reshape(2, -1)
    pv = pd.DataFrame({
        "day": np.asarray(base.day_ids)[dgrid[0]],
        "hour": dgrid[1],
        "pv_pu": base.pv_profile.reshape(-1),
    })
    atomic_write_text(load_path, frame_to_csv_text(loads))
    atomic_write_text(pv_path, frame_to_csv_text(pv))


def read_base_year(load_path, pv_path):
    try:
        loads = pd.read_csv(load_path, dtype={"bus": str})
        pv = pd.read_csv(pv_path)
    except FileNotFoundError as exc:
        raise ScenarioDataError(f"base-year file not found: {exc.filename}") from exc
    for df, cols, path in ((loads, {"bus", "day", "hour", "p_mw", "q_mvar"}, load_path),
                           (pv, {"day", "hour", "pv_pu"}, pv_path)):
        if not cols <= set(df.columns):
            raise ScenarioDataError(f"{path}: missing columns {sorted(cols - set(df.columns))}")

    bus_ids = tuple(pd.unique(loads["bus"]))
    day_ids = tuple(int(x) for x in sorted(pd.unique(loads["day"])))
    hours = int(loads["hour"].max()) + 1
    shape = (len(bus_ids), len(day_ids), hours)
    if len(loads) != int(np.prod(shape)) or len(pv) != len(day_ids) * hours:
        raise ScenarioDataError("base-year tables are not dense over (bus, day, hour)")

    day_pos = {day: i for i, day in enumerate(day_ids)}
    n = loads["bus"].map({b: i for i, b in enumerate(bus_ids)}).to_numpy()
    d = loads["day"].map(day_pos).to_numpy()
    h = loads["hour"].to_numpy()
    load_p = np.zeros(shape)
    load_q = np.zeros(shape)
    load_p[n, d, h] = loads["p_mw"].to_numpy()
    load_q[n, d, h] = loads["q_mvar"].to_numpy()

    pv_d = pv["day"].map(day_pos)
    if pv_d.isna().any():
        raise ScenarioDataError(f"{pv_path}: PV profile covers days absent from the load table")
    profile = np.zeros((len(day_ids), hours))
    profile[pv_d.to_numpy(dtype=int), pv["hour"].to_numpy()] = pv["pv_pu"].to_numpy()
    return BaseYear(bus_ids=bus_ids, day_ids=day_ids, load_p=load_p, load_q=load_q, pv_profile=profile)
