"""Exception hierarchy.

Validation problems (bad inputs, malformed specs) derive from
:class:`ValidationError`; the CLI maps them to exit code 2. Everything
else raised during a computation maps to exit code 3.
"""


class HazardRiskError(Exception):
    """Base class for all package errors."""


class ValidationError(HazardRiskError, ValueError):
    """Input violates a documented precondition."""


class FitError(ValidationError):
    """A model could not be fitted to the supplied data."""


class DegenerateDataError(FitError):
    """Data carries no spread (all values equal, zero variance)."""


class RankDeficiencyError(FitError):
    """Regressor matrix is not of full column rank."""

    def __init__(self, message, collinear=()):
        super().__init__(message)
        self.collinear = tuple(collinear)


class GraphError(ValidationError):
    """A Bayesian network specification is invalid."""


class CycleError(GraphError):
    def __init__(self, cycle):
        super().__init__("cycle detected: " + " -> ".join(cycle))
        self.cycle = tuple(cycle)


class EvaluationError(HazardRiskError):
    """A deterministic node failed to evaluate."""

    def __init__(self, node, row, reason):
        where = f"node {node!r}" + (f", row {row}" if row is not None else "")
        super().__init__(f"{where}: {reason}")
        self.node = node
        self.row = row
