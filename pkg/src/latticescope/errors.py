"""Exception hierarchy.

Every error raised for a physically or numerically invalid request derives
from :class:`DomainError`, which the command-line front end maps to exit
code 1.
"""


class DomainError(ValueError):
    """Base class for invalid physical or numerical requests."""


class ResolutionError(DomainError):
    pass


class TilingError(DomainError):
    pass


class PropagationError(DomainError):
    """A requested diffraction order is evanescent."""


class TraceError(DomainError):
    """A ray cannot be continued (total internal reflection, missed surface)."""


class VignettingError(TraceError):
    pass


class NoFocusError(DomainError):
    pass


class OptimizationError(DomainError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DetectionError(DomainError):
    pass


class ModelMismatchError(DomainError):
    pass


class AlignmentError(DomainError):
    pass


class GeometryError(DomainError):
    pass


class RangeError(DomainError):
    pass


class StabilityError(DomainError):
    """Time step or grid too coarse for split-step propagation."""


class ConvergenceError(DomainError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(DomainError):
    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line
