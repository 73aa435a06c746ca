"""Exception hierarchy. Each class carries the CLI exit status for its error class."""


class UcplabError(Exception):
    exit_code = 1


class ConfigError(UcplabError, ValueError):
    exit_code = 2


class InvalidParameter(ConfigError):
    pass


class GeometryError(InvalidParameter):
    """A ball, support or cutoff does not fit the grid box."""


class ParityError(InvalidParameter):
    pass


class DomainError(InvalidParameter):
    """Argument outside the domain of a closed-form function."""


class SingularEvaluationError(InvalidParameter):
    pass


class DegenerateInput(InvalidParameter):
    pass


class SolverError(UcplabError):
    exit_code = 3


class NoConvergence(SolverError):
    pass


class DegenerateGroundState(SolverError):
    pass


class IntegrabilityError(SolverError):
    pass


class ResourceLimit(UcplabError):
    exit_code = 4


class BudgetExceeded(ResourceLimit):
    pass


class DynamicRangeError(ResourceLimit):
    pass


class ReportIOError(UcplabError, OSError):
    exit_code = 5
