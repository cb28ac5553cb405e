import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-8
DEFAULT_RESIDUAL_TOL = 1e-7  # p.u. power mismatch
DEFAULT_MAX_ITER = 100
DIVERGENCE_VOLTAGE = 0.5


@dataclass(frozen=True, eq=False)
class OperatingPoint:
    """
    A batch of P operating points of one radial feeder, p.u.

    Buses are in breadth-first order from the root (position 0). Branch n feeds
    bus n from ``parent[n]``; ``ratio[:, n]`` is the voltage ratio of an ideal
    regulator at bus n (1 where there is none). ``injection`` is complex power
    injected into the network, negative for load.
    """
    bus_ids: tuple
    parent: np.ndarray  # (N,), -1 at the root
    impedance: np.ndarray  # (N,) complex, branch into each bus
    capacity: np.ndarray  # (N,) branch rating
    injection: np.ndarray  # (P, N) complex
    ratio: np.ndarray  # (P, N)
    v_root: float = 1.0
    labels: tuple = ()

    @property
    def n_points(self):
        return self.injection.shape[0]


@dataclass(frozen=True, eq=False)
class SweepResult:
    voltage: np.ndarray  # (P, N) complex bus voltages
    branch_current: np.ndarray  # (P, N) current on the line side of branch n
    s_send: np.ndarray  # (P, N) complex power leaving the parent on branch n
    s_receive: np.ndarray  # (P, N) complex power arriving at the line end of branch n
    loading: np.ndarray  # (P, N) max(|s_send|, |s_receive|) / capacity
    root_power: np.ndarray  # (P,) complex power supplied by the root
    iterations: np.ndarray  # (P,) iterations to convergence
    converged: np.ndarray  # (P,) bool
    diverged: np.ndarray  # (P,) bool
    residual: np.ndarray  # (P,) max bus power mismatch


def backward_forward_sweep(point, tol=DEFAULT_TOLERANCE, max_iter=DEFAULT_MAX_ITER, residual_tol=DEFAULT_RESIDUAL_TOL):
    """
    Backward/forward sweep power flow, vectorized over operating points.

    Backward: bus currents I = conj(S_load / V) accumulate towards the root,
    scaled by each regulator ratio. Forward: voltages drop along each branch
    and are multiplied by the regulator ratio at its end. Points converge when
    the largest voltage update falls below ``tol`` and the final bus power
    mismatch is at most ``residual_tol``; a point diverges when a
    voltage collapses below 0.5 p.u. or turns nonfinite.
    """
    order = np.arange(len(point.bus_ids))
    parent = point.parent
    n_points, n_bus = point.injection.shape
    demand = -point.injection
    a = point.ratio
    z = point.impedance

    v = np.full((n_points, n_bus), complex(point.v_root))
    iterations = np.full(n_points, max_iter)
    converged = np.zeros(n_points, dtype=bool)
    diverged = np.zeros(n_points, dtype=bool)
    j_line = np.zeros((n_points, n_bus), dtype=complex)
    i_load = np.zeros((n_points, n_bus), dtype=complex)

    with np.errstate(all="ignore"):
        for it in range(1, max_iter + 1):
            i_load = np.conj(demand / v)
            j_bus = i_load.copy()
            for n in order[:0:-1]:
                j_line[:, n] = a[:, n] * j_bus[:, n]
                j_bus[:, parent[n]] += j_line[:, n]
            v_new = v.copy()
            for n in order[1:]:
                v_new[:, n] = a[:, n] * (v_new[:, parent[n]] - z[n] * j_line[:, n])
            delta = np.abs(v_new - v).max(axis=1)
            v = np.where((converged | diverged)[:, None], v, v_new)

            bad = ~np.isfinite(v).all(axis=1) | (np.abs(v) < DIVERGENCE_VOLTAGE).any(axis=1)
            diverged |= bad & ~converged
            newly = (delta < tol) & ~converged & ~diverged
            iterations[newly] = it
            converged |= newly
            if (converged | diverged).all():
                break

        # flows from the final voltages, then one forward pass for a KVL-consistent state
        i_load = np.conj(demand / v)
        j_bus = i_load.copy()
        for n in order[:0:-1]:
            j_line[:, n] = a[:, n] * j_bus[:, n]
            j_bus[:, parent[n]] += j_line[:, n]
        v_check = v.copy()
        v_inner = np.ones_like(v)
        s_send = np.zeros_like(v)
        s_receive = np.zeros_like(v)
        for n in order[1:]:
            v_inner[:, n] = v_check[:, parent[n]] - z[n] * j_line[:, n]
            v_check[:, n] = a[:, n] * v_inner[:, n]
            s_send[:, n] = v_check[:, parent[n]] * np.conj(j_line[:, n])
            s_receive[:, n] = v_inner[:, n] * np.conj(j_line[:, n])
        mismatch = np.abs(v_check * np.conj(i_load) - demand)
        residual = mismatch[:, 1:].max(axis=1) if n_bus > 1 else np.zeros(n_points)
        capacity = np.where(point.capacity > 0, point.capacity, np.inf)
        loading = np.maximum(np.abs(s_send), np.abs(s_receive)) / capacity
        root_power = v_check[:, 0] * np.conj(j_bus[:, 0])

    loose = converged & ~(residual <= residual_tol)
    if loose.any():
        logger.warning("[WARN] %d power-flow points settled with a power mismatch above %.0e p.u.",
                       int(loose.sum()), residual_tol)
        converged = converged & ~loose

    if diverged.any():
        logger.warning("[WARN] %d of %d power-flow points diverged", int(diverged.sum()), n_points)
    return SweepResult(
        voltage=v_check,
        branch_current=j_line,
        s_send=s_send,
        s_receive=s_receive,
        loading=loading,
        root_power=root_power,
        iterations=iterations,
        converged=converged,
        diverged=diverged,
        residual=residual,
    )
