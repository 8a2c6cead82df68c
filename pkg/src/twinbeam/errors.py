"""Exception hierarchy shared by every module."""


class TwinBeamError(Exception):
    """Base class for all package errors."""


class DomainError(TwinBeamError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class InsufficientDataError(TwinBeamError, ValueError):
    pass


class ShapeError(TwinBeamError, ValueError):
    pass


class UnphysicalModelError(DomainError):
    """Parameters imply a non positive-semidefinite covariance."""


class DegenerateConditioningError(DomainError):
    pass


class UnderflowError(TwinBeamError, ArithmeticError):
    pass


class InvalidPartitionError(TwinBeamError, ValueError):
    pass


class InsufficientSelectionError(TwinBeamError):
    """Fewer than two samples fell inside the acceptance band.

    ``success_rate``, ``accepted_count`` and the (0 or 1) accepted ``indices``
    are carried so callers can decide whether to widen the band.
    """

    def __init__(self, message: str, success_rate: float, accepted_count: int, indices=()):
        super().__init__(message)
        self.success_rate = success_rate
        self.accepted_count = accepted_count
        self.indices = indices


class TraceParseError(TwinBeamError, ValueError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class ConfigError(TwinBeamError, ValueError):
    pass
