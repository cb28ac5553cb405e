import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
import pulp
from scipy.optimize import Bounds, LinearConstraint, milp

from grid.errors import SolverError
from planning.problem import BINARY, FREE, SENSES, VarBlock, VarRef, safe_label

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
FEASIBLE_GAP = "feasible-gap"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
TIMEOUT = "timeout"
ERROR = "error"

DEFAULT_MIP_GAP = 1e-4


@dataclass(frozen=True)
class SolverSettings:
    mip_gap: float = DEFAULT_MIP_GAP
    time_limit: float | None = None
    verbose: bool = False
    threads: int | None = None


@dataclass
class Solution:
    status: str
    objective: float | None = None
    values: np.ndarray | None = None
    mip_gap: float | None = None
    message: str = ""
    backend: str = ""
    seconds: float = 0.0

    @property
    def has_values(self):
        return self.values is not None and self.status in (OPTIMAL, FEASIBLE_GAP)

    def value(self, var):
        index = var.index if isinstance(var, VarRef) else int(var)
        return float(self.values[index])

    def block(self, var):
        """Values shaped like a VarBlock or an index array."""
        index = var.index if isinstance(var, VarBlock) else np.asarray(var)
        return self.values[index]


class SolverBackend(ABC):
    name = "abstract"
    capabilities = frozenset({BINARY, FREE})

    def __init__(self, settings=None):
        self.settings = settings or SolverSettings()

    def solve(self, spec):
        """Solve ``spec``; failures come back as a Solution with status "error"."""
        start = time.perf_counter()
        try:
            spec.check()
            solution = self._solve(spec)
        except Exception as exc:
            logger.debug("Backend %s raised", self.name, exc_info=True)
            solution = Solution(status=ERROR, message=f"{type(exc).__name__}: {exc}")
        solution.backend = self.name
        solution.seconds = time.perf_counter() - start
        logger.debug("%s: %s in %.2fs (objective %s)", spec.name, solution.status,
                     solution.seconds, solution.objective)
        return solution

    @abstractmethod
    def _solve(self, spec):
        ...


class HighsBackend(SolverBackend):
    """HiGHS through ``scipy.optimize.milp``."""
    name = "highs"

    def _solve(self, spec):
        a, lo, hi = spec.row_bounds()
        c = spec.objective_vector()
        if spec.maximize:
            c = -c
        options = {"disp": self.settings.verbose, "mip_rel_gap": self.settings.mip_gap}
        if self.settings.time_limit is not None:
            options["time_limit"] = float(self.settings.time_limit)
        result = milp(
            c,
            integrality=spec.integrality(),
            bounds=Bounds(spec.lower_bounds, spec.upper_bounds),
            constraints=LinearConstraint(a, lo, hi) if spec.n_rows else None,
            options=options,
        )
        x = result.x
        if result.status == 0:
            status = OPTIMAL
        elif result.status == 1:
            status = FEASIBLE_GAP if x is not None else TIMEOUT
        elif result.status == 2:
            status = INFEASIBLE
        elif result.status == 3:
            status = UNBOUNDED
        else:
            status = ERROR
        objective = None
        if x is not None and status in (OPTIMAL, FEASIBLE_GAP):
            objective = float(spec.objective_vector() @ x + spec.objective.constant)
        gap = getattr(result, "mip_gap", None)
        return Solution(
            status=status,
            objective=objective,
            values=None if x is None else np.asarray(x, dtype=float),
            mip_gap=None if gap is None or not np.isfinite(gap) else float(gap),
            message=str(result.message),
        )


class PulpBackend(SolverBackend):
    """CBC through PuLP."""
    name = "cbc"

    def _solve(self, spec):
        names = spec.variable_names()
        prob = pulp.LpProblem(safe_label(spec.name), pulp.LpMaximize if spec.maximize else pulp.LpMinimize)
        variables = []
        for name, kind, lo, hi in zip(names, spec.kinds, spec.lower_bounds, spec.upper_bounds):
            variables.append(pulp.LpVariable(
                name,
                lowBound=None if np.isinf(lo) else float(lo),
                upBound=None if np.isinf(hi) else float(hi),
                cat=pulp.LpBinary if kind == BINARY and lo == 0 and hi == 1 else
                (pulp.LpInteger if kind == BINARY else pulp.LpContinuous),
            ))
        obj = spec.objective_vector()
        prob += pulp.lpSum(float(obj[i]) * variables[i] for i in np.flatnonzero(obj)) + spec.objective.constant

        a, senses, rhs = spec.matrix()
        pulp_sense = {"<=": pulp.LpConstraintLE, "==": pulp.LpConstraintEQ, ">=": pulp.LpConstraintGE}
        for r, row_name in enumerate(spec.row_names()):
            start, end = a.indptr[r], a.indptr[r + 1]
            expr = pulp.LpAffineExpression(
                [(variables[j], float(v)) for j, v in zip(a.indices[start:end], a.data[start:end])])
            prob += pulp.LpConstraint(expr, sense=pulp_sense[SENSES[senses[r]]], rhs=float(rhs[r]), name=row_name)

        solver = pulp.PULP_CBC_CMD(
            msg=self.settings.verbose,
            gapRel=self.settings.mip_gap,
            timeLimit=self.settings.time_limit,
            threads=self.settings.threads,
        )
        prob.solve(solver)
        sol_status = prob.sol_status
        if sol_status == pulp.LpSolutionOptimal:
            status = OPTIMAL
        elif sol_status == pulp.LpSolutionIntegerFeasible:
            status = FEASIBLE_GAP
        elif sol_status == pulp.LpSolutionInfeasible:
            status = INFEASIBLE
        elif sol_status == pulp.LpSolutionUnbounded:
            status = UNBOUNDED
        elif self.settings.time_limit is not None:
            status = TIMEOUT
        else:
            status = ERROR
        if status in (OPTIMAL, FEASIBLE_GAP):
            values = np.array([v.varValue if v.varValue is not None else 0.0 for v in variables], dtype=float)
            objective = float(obj @ values + spec.objective.constant)
        else:
            values, objective = None, None
        return Solution(status=status, objective=objective, values=values,
                        mip_gap=0.0 if status == OPTIMAL else None,
                        message=pulp.LpStatus[prob.status])


BACKENDS = {"highs": HighsBackend, "cbc": PulpBackend, "pulp": PulpBackend}


def make_backend(name="highs", settings=None):
    try:
        cls = BACKENDS[name.lower()]
    except KeyError:
        raise SolverError(f"unknown solver backend {name!r}; choose from {sorted(BACKENDS)}") from None
    return cls(settings)


def solve(problem, backend=None):
    """Solve a ProblemSpec (or a PlanningProblem) with ``backend``, HiGHS by default."""
    spec = getattr(problem, "spec", problem)
    return (backend or HighsBackend()).solve(spec)
