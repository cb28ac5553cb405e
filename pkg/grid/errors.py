"""
Exception hierarchy shared by every package.

Solver outcomes (infeasible, timeout, ...) are statuses, not exceptions; the
classes below cover misconfiguration and broken invariants.
"""


class PlanningError(Exception):
    """Base class for all errors raised by the toolkit."""


class ModelValidationError(PlanningError):
    def __init__(self, report):
        self.report = report
        lines = "\n".join(f"  - {v}" for v in report.violations)
        super().__init__(f"Feeder model failed validation:\n{lines}")


class ScenarioDataError(PlanningError):
    """Missing or ill-shaped netload / base-year data."""


class DiffusionError(PlanningError):
    """Adoption probability left [0, 1] during a simulation step."""


class SolverError(PlanningError):
    """A solver backend could not be selected or constructed."""


class InfeasibleBudgetError(PlanningError):
    def __init__(self, min_cost, budgets):
        self.min_cost = min_cost
        self.budgets = list(budgets)
        if min_cost is None:
            detail = "the scenario-based model is itself infeasible"
        else:
            detail = f"minimum secure-investment cost is {min_cost:,.2f}"
        super().__init__(
            f"All {len(self.budgets)} budgets are infeasible "
            f"(largest {max(self.budgets):,.2f}); {detail}"
        )


class PlanExtractionError(PlanningError):
    """Rounded solution breaks plan invariants or its cost disagrees with the objective."""


class PowerFlowError(PlanningError):
    """A validation run contains non-converged or diverged operating points."""


class ConfigError(PlanningError):
    """Invalid run configuration."""
