"""
Linearized DistFlow constraint families.

Arrays of variable indices are laid out (option | bess | bus, day, hour) for
one scenario; investment variables are shared by all scenarios. Row names
carry the scenario position so they stay unique across scenarios.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from grid.hyperplanes import hyperplanes
from planning.problem import BINARY, EQ, FREE, GE, LE, NONNEG

logger = logging.getLogger(__name__)


def _child_of(model, corridor):
    parent = model.topology.parent
    return corridor.to_bus if parent.get(corridor.to_bus) == corridor.from_bus else corridor.from_bus


def _candidates(model):
    root = model.topology.root
    return [bus for bus in model.candidate_regulator_buses if bus.id != root]


@dataclass(frozen=True, eq=False)
class NetworkIndex:
    """Positions and parameters of the feeder, vectorized in ``model.options`` order."""
    option_ids: tuple
    corridor_ids: tuple
    fr_pos: np.ndarray
    to_pos: np.ndarray
    resistance: np.ndarray
    reactance: np.ndarray
    capacity: np.ndarray
    gated: np.ndarray  # option belongs to a corridor with more than one option
    bus_ids: tuple
    poi_pos: int
    reg_bus_pos: np.ndarray  # regulated buses (existing or candidate), root excluded
    reg_ratio: np.ndarray  # (R, 2) squared ratio bounds
    cand_ids: tuple
    cand_bus_pos: np.ndarray
    cand_reg_pos: np.ndarray  # positions within reg_bus_pos
    bess_ids: tuple
    bess_bus_pos: np.ndarray

    @property
    def n_options(self):
        return len(self.option_ids)


@lru_cache(maxsize=16)
def network_index(model):
    bus_pos = model.bus_index
    root = model.topology.root
    fr, to, corridor_ids, gated = [], [], [], []
    for corridor in model.corridors:
        child = _child_of(model, corridor)
        parent = corridor.from_bus if child == corridor.to_bus else corridor.to_bus
        for _ in corridor.options:
            fr.append(bus_pos[parent])
            to.append(bus_pos[child])
            corridor_ids.append(corridor.id)
            gated.append(len(corridor.options) > 1)
    options = model.options
    regulated = [bus for bus in model.regulated_buses if bus.id != root]
    reg_pos = [bus_pos[bus.id] for bus in regulated]
    candidates = _candidates(model)
    return NetworkIndex(
        option_ids=tuple(o.id for o in options),
        corridor_ids=tuple(corridor_ids),
        fr_pos=np.array(fr, dtype=int),
        to_pos=np.array(to, dtype=int),
        resistance=np.array([o.resistance for o in options], dtype=float),
        reactance=np.array([o.reactance for o in options], dtype=float),
        capacity=np.array([o.capacity for o in options], dtype=float),
        gated=np.array(gated, dtype=bool),
        bus_ids=tuple(bus.id for bus in model.buses),
        poi_pos=bus_pos[root],
        reg_bus_pos=np.array(reg_pos, dtype=int),
        reg_ratio=np.array([bus.ratio_bounds() for bus in regulated], dtype=float).reshape(-1, 2),
        cand_ids=tuple(b.id for b in candidates),
        cand_bus_pos=np.array([bus_pos[b.id] for b in candidates], dtype=int),
        cand_reg_pos=np.array([reg_pos.index(bus_pos[b.id]) for b in candidates], dtype=int),
        bess_ids=tuple(b.id for b in model.bess_candidates),
        bess_bus_pos=np.array([bus_pos[b.bus] for b in model.bess_candidates], dtype=int),
    )


@dataclass(frozen=True, eq=False)
class InvestmentVars:
    xl: object  # VarBlock (L,)
    xb: object  # VarBlock (B,), installed rating in p.u.
    xr: object  # VarBlock (candidate regulators,)

    def cost_terms(self, model):
        """(coefficients, indices) of the investment cost, in currency."""
        coefs = [o.cost for o in model.options]
        coefs += [b.unit_cost * model.s_base for b in model.bess_candidates]
        coefs += [bus.regulator_candidate.cost for bus in _candidates(model)]
        indices = np.concatenate([self.xl.index, self.xb.index, self.xr.index]).astype(int)
        return np.array(coefs, dtype=float), indices


@dataclass(frozen=True, eq=False)
class OperationalVars:
    k: int
    scenario_id: str
    rho_p: np.ndarray  # (D, H)
    rho_q: np.ndarray
    fp: np.ndarray  # (L, D, H)
    fq: np.ndarray
    dis: np.ndarray  # (B, D, H)
    chg: np.ndarray
    bq: np.ndarray
    e: np.ndarray
    v: np.ndarray  # (N, D, H) squared voltage at the bus
    vreg: np.ndarray  # (R, D, H) squared voltage at the line end, before the regulator
    cap_slack: np.ndarray | None = None  # elastic variant only
    vlo_slack: np.ndarray | None = None
    vhi_slack: np.ndarray | None = None

    def tag(self, prefix):
        return f"{prefix}_k{self.k}"


def compute_big_m(model):
    """
    Big-M constants for the gated voltage-drop rows and the regulator identity rows.

    Line M: spread of admissible squared voltages at both ends plus the largest
    drop term 2(R + X) * C * sqrt(2). For lines into a regulated bus the TO-end
    range is widened to the pre-regulator range. User overrides win.

    Returns:
        (dict, dict): option id -> M, bus id -> M
    """
    vmax = max(bus.vmax_sq for bus in model.buses)
    vmin = min(bus.vmin_sq for bus in model.buses)
    line_m = {}
    for corridor in model.corridors:
        bus = model.bus_by_id[_child_of(model, corridor)]
        hi, lo = vmax, vmin
        if bus.has_regulation:
            r_lo, r_hi = bus.ratio_bounds()
            hi = max(hi, bus.vmax_sq / r_lo)
            lo = min(lo, bus.vmin_sq / r_hi)
        for option in corridor.options:
            if option.big_m is not None:
                m = float(option.big_m)
            else:
                m = (hi - lo) + 2.0 * (option.resistance + option.reactance) * option.capacity * math.sqrt(2.0)
            if not math.isfinite(m) or m <= 0:
                raise ValueError(f"big-M for line option {option.id} is not a positive finite number")
            line_m[option.id] = m
    reg_m = {}
    for bus in _candidates(model):
        rc = bus.regulator_candidate
        m = float(rc.big_m) if rc.big_m is not None else bus.vmax_sq / rc.ratio_min_sq
        if not math.isfinite(m) or m <= 0:
            raise ValueError(f"big-M for regulator at bus {bus.id} is not a positive finite number")
        reg_m[bus.id] = m
    return line_m, reg_m

# ------------------------------------------------------------------ variables


def add_investment_vars(spec, model):
    """Line, BESS and regulator decisions plus the one-option-per-corridor rows."""
    net = network_index(model)
    xl = spec.add_var_block("xl", [net.option_ids], kind=BINARY, lb=np.where(net.gated, 0.0, 1.0))
    xb = spec.add_var_block("xb", [net.bess_ids], kind=NONNEG,
                            ub=np.array([b.max_capacity / model.s_base for b in model.bess_candidates]))
    xr = spec.add_var_block("xr", [net.cand_ids], kind=BINARY)
    position = 0
    for corridor in model.corridors:
        count = len(corridor.options)
        expr = sum((xl.ref(position + i) for i in range(count)), start=0.0)
        spec.add_constraint(expr, EQ, 1.0, name=f"pick_{corridor.id}")
        position += count
    return InvestmentVars(xl=xl, xb=xb, xr=xr)


def add_operational_vars(spec, model, k, scenario_id, elastic=False, selected=None):
    """
    Operational variables of scenario ``k``.

    Squared voltages carry their limits as bounds, the PoI fixed to the
    reference. The elastic variant moves those limits into rows with slacks and
    adds a capacity slack for each selected line option.
    """
    net = network_index(model)
    days = model.time.day_ids
    hours = tuple(range(model.time.hours_per_day))

    def block(prefix, first, kind, lb=None, ub=None):
        if first is None:
            return spec.add_var_block(prefix, [(k,), days, hours], kind=kind, lb=lb, ub=ub).index[0]
        return spec.add_var_block(prefix, [first, (k,), days, hours], kind=kind, lb=lb, ub=ub).index[:, 0]

    if elastic:
        vmin = np.zeros(len(net.bus_ids))
        vmax = np.full(len(net.bus_ids), np.inf)
    else:
        vmin = np.array([bus.vmin_sq for bus in model.buses])
        vmax = np.array([bus.vmax_sq for bus in model.buses])
    vmin[net.poi_pos] = vmax[net.poi_pos] = model.v_ref_sq

    ops = dict(
        k=k,
        scenario_id=scenario_id,
        rho_p=block("rp", None, FREE),
        rho_q=block("rq", None, FREE),
        fp=block("fp", net.option_ids, FREE),
        fq=block("fq", net.option_ids, FREE),
        dis=block("dis", net.bess_ids, NONNEG),
        chg=block("chg", net.bess_ids, NONNEG),
        bq=block("bq", net.bess_ids, FREE),
        e=block("e", net.bess_ids, NONNEG),
        v=block("v", net.bus_ids, NONNEG, lb=vmin[:, None, None, None], ub=vmax[:, None, None, None]),
        vreg=block("vr", tuple(net.bus_ids[p] for p in net.reg_bus_pos), NONNEG),
    )
    if elastic:
        selected = np.ones(net.n_options, dtype=bool) if selected is None else np.asarray(selected, dtype=bool)
        ops["cap_slack"] = block("scap", net.option_ids, NONNEG,
                                 ub=np.where(selected, np.inf, 0.0)[:, None, None, None])
        ops["vlo_slack"] = block("svlo", net.bus_ids, NONNEG)
        ops["vhi_slack"] = block("svhi", net.bus_ids, NONNEG)
    return OperationalVars(**ops)

# ------------------------------------------------------------------ rows


def add_power_balance(spec, model, ops, load_p, load_q):
    """
    Active and reactive nodal balance of one scenario.

    ``load_p`` / ``load_q`` are (N, D, H) netloads in p.u. in ``model.buses``
    order. Row: out-flows - in-flows - (dis - chg) - rho[PoI] = -load.
    """
    net = network_index(model)
    for n, bus_id in enumerate(net.bus_ids):
        out_l = np.flatnonzero(net.fr_pos == n)
        in_l = np.flatnonzero(net.to_pos == n)
        terms_p = [(1.0, ops.fp[l]) for l in out_l] + [(-1.0, ops.fp[l]) for l in in_l]
        terms_q = [(1.0, ops.fq[l]) for l in out_l] + [(-1.0, ops.fq[l]) for l in in_l]
        for b in np.flatnonzero(net.bess_bus_pos == n):
            terms_p += [(-1.0, ops.dis[b]), (1.0, ops.chg[b])]
            terms_q += [(-1.0, ops.bq[b])]
        if n == net.poi_pos:
            terms_p.append((-1.0, ops.rho_p))
            terms_q.append((-1.0, ops.rho_q))
        spec.add_rows(ops.tag(f"balp_{bus_id}"), terms_p, EQ, -np.asarray(load_p[n]))
        spec.add_rows(ops.tag(f"balq_{bus_id}"), terms_q, EQ, -np.asarray(load_q[n]))


def add_line_capacity(spec, model, inv, ops):
    """Polygon apparent-power limit per option, gated by its selection binary."""
    net = network_index(model)
    if not net.n_options:
        return
    coef = hyperplanes(model.hyperplane_count)
    cp = coef[:, 0][:, None, None, None]
    cq = coef[:, 1][:, None, None, None]
    terms = [
        (cp, ops.fp[None]),
        (cq, ops.fq[None]),
        (-net.capacity[None, :, None, None], inv.xl.index[None, :, None, None]),
    ]
    if ops.cap_slack is not None:
        terms.append((-1.0, ops.cap_slack[None]))
    spec.add_rows(ops.tag("cap"), terms, LE, 0.0)


def add_bess(spec, model, inv, ops):
    """Cyclic daily energy balance, energy and rating limits, converter polygon."""
    if not model.bess_candidates:
        return
    units = model.bess_candidates
    eta_c = np.array([b.eff_charge for b in units])[:, None, None]
    eta_d = np.array([b.eff_discharge for b in units])[:, None, None]
    duration = np.array([b.duration_ratio for b in units])[:, None, None]
    xb = inv.xb.index[:, None, None]
    e_prev = np.roll(ops.e, 1, axis=-1)

    spec.add_rows(ops.tag("soc"), [(1.0, ops.e), (-1.0, e_prev), (1.0 / eta_d, ops.dis), (-eta_c, ops.chg)],
                  EQ, 0.0)
    spec.add_rows(ops.tag("emax"), [(1.0, ops.e), (-duration, xb)], LE, 0.0)
    spec.add_rows(ops.tag("dmax"), [(1.0, ops.dis), (-1.0, xb)], LE, 0.0)
    spec.add_rows(ops.tag("cmax"), [(1.0, ops.chg), (-1.0, xb)], LE, 0.0)

    coef = hyperplanes(model.hyperplane_count)
    cp = coef[:, 0][:, None, None, None]
    cq = coef[:, 1][:, None, None, None]
    spec.add_rows(ops.tag("bpoly"), [(cp, ops.dis[None]), (-cp, ops.chg[None]), (cq, ops.bq[None]),
                                     (-1.0, xb[None])], LE, 0.0)


def add_voltage(spec, model, inv, ops, line_m=None, reg_m=None):
    """Gated voltage drop per option, regulator ratio window and candidate identity rows."""
    net = network_index(model)
    if line_m is None or reg_m is None:
        line_m, reg_m = compute_big_m(model)

    reg_of_bus = {int(p): i for i, p in enumerate(net.reg_bus_pos)}
    v_to = ops.v[net.to_pos].copy()
    for l, n in enumerate(net.to_pos):
        if int(n) in reg_of_bus:
            v_to[l] = ops.vreg[reg_of_bus[int(n)]]
    v_fr = ops.v[net.fr_pos]
    r2 = (2.0 * net.resistance)[:, None, None]
    x2 = (2.0 * net.reactance)[:, None, None]

    fixed = np.flatnonzero(~net.gated)
    if fixed.size:
        spec.add_rows(ops.tag("vdrop"), [(1.0, v_to[fixed]), (-1.0, v_fr[fixed]), (r2[fixed], ops.fp[fixed]),
                                         (x2[fixed], ops.fq[fixed])], EQ, 0.0)
    gated = np.flatnonzero(net.gated)
    if gated.size:
        m = np.array([line_m[net.option_ids[l]] for l in gated])[:, None, None]
        x = inv.xl.index[gated][:, None, None]
        drop = [(1.0, v_to[gated]), (-1.0, v_fr[gated]), (r2[gated], ops.fp[gated]), (x2[gated], ops.fq[gated])]
        spec.add_rows(ops.tag("vdrop_ub"), drop + [(m, x)], LE, m)
        spec.add_rows(ops.tag("vdrop_lb"), [(-c, i) for c, i in drop] + [(m, x)], LE, m)

    if net.reg_bus_pos.size:
        lo = net.reg_ratio[:, 0][:, None, None]
        hi = net.reg_ratio[:, 1][:, None, None]
        v_reg_bus = ops.v[net.reg_bus_pos]
        spec.add_rows(ops.tag("ratio_lo"), [(lo, ops.vreg), (-1.0, v_reg_bus)], LE, 0.0)
        spec.add_rows(ops.tag("ratio_hi"), [(1.0, v_reg_bus), (-hi, ops.vreg)], LE, 0.0)

    if net.cand_bus_pos.size:
        m = np.array([reg_m[bus_id] for bus_id in net.cand_ids])[:, None, None]
        xr = inv.xr.index[:, None, None]
        v_c = ops.v[net.cand_bus_pos]
        vr_c = ops.vreg[net.cand_reg_pos]
        spec.add_rows(ops.tag("reg_off_ub"), [(1.0, v_c), (-1.0, vr_c), (-m, xr)], LE, 0.0)
        spec.add_rows(ops.tag("reg_off_lb"), [(1.0, vr_c), (-1.0, v_c), (-m, xr)], LE, 0.0)

    if ops.vlo_slack is not None:
        vmin = np.array([bus.vmin_sq for bus in model.buses])[:, None, None]
        vmax = np.array([bus.vmax_sq for bus in model.buses])[:, None, None]
        spec.add_rows(ops.tag("vmin"), [(1.0, ops.v), (1.0, ops.vlo_slack)], GE, vmin)
        spec.add_rows(ops.tag("vmax"), [(1.0, ops.v), (-1.0, ops.vhi_slack)], LE, vmax)


def add_substation_limit(spec, model, ops):
    if model.substation_limit is None:
        return
    coef = hyperplanes(model.hyperplane_count)
    spec.add_rows(ops.tag("sub"), [(coef[:, 0][:, None, None], ops.rho_p[None]),
                                   (coef[:, 1][:, None, None], ops.rho_q[None])], LE, model.substation_limit)
