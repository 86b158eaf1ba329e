"""Exception hierarchy shared across the package."""


class ReviewCalError(Exception):
    """Base class for all errors raised by reviewcal."""


class DataError(ReviewCalError, ValueError):
    """Input data violates a structural requirement."""


class DuplicateReview(DataError):
    pass


class IndexOutOfRange(DataError):
    pass


class EmptyReviewer(DataError):
    pass


class UnknownReviewer(DataError, KeyError):
    pass


class UnreviewedItem(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class SizeMismatch(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MissingGroundTruth(DataError):
    pass


class DegenerateTruth(DataError):
    pass


class DegenerateReviewer(DataError):
    pass


class SlopeBoundViolated(DataError):
    pass


class MissingRank(DataError):
    pass


class NotSimpleGraph(DataError):
    pass


class GraphIsRecoveryRobust(DataError):
    """Raised when a counterexample is requested for a graph that admits none."""


class ConfigError(ReviewCalError, ValueError):
    pass


class InvalidConfig(ConfigError):
    pass


class InsufficientCapacity(ConfigError):
    pass


class InvalidDistribution(ConfigError):
    pass


class UnknownKind(ConfigError):
    pass


class InvalidN(ConfigError):
    pass


class InvalidAxis(ConfigError):
    pass


class SolverError(ReviewCalError, RuntimeError):
    pass


class NumericalBreakdown(SolverError):
    pass


class Infeasible(SolverError):
    pass


class SolverFailure(SolverError):
    pass
