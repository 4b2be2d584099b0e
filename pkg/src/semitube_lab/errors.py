"""Exception types raised by the library."""


class SemitubeLabError(Exception):
    """Base class for all library errors."""


class DomainError(SemitubeLabError, ValueError):
    """A point lies outside the region where an operation is defined."""


class DimensionError(SemitubeLabError, ValueError):
    pass


class PreconditionError(SemitubeLabError, ValueError):
    pass


class DegenerateMaskError(SemitubeLabError, ValueError):
    """A mask is entirely inside or entirely outside."""


class StencilTooSmallError(SemitubeLabError, ValueError):
    pass


class CriticalBoundaryPointError(SemitubeLabError, ValueError):
    """The defining function has (numerically) vanishing gradient."""


class EmptyDomainError(SemitubeLabError, ValueError):
    pass


class NoRegularValueError(SemitubeLabError, RuntimeError):
    def __init__(self, message, offending_cells=None):
        super().__init__(message)
        self.offending_cells = offending_cells if offending_cells is not None else []


class InapplicableProbeError(SemitubeLabError, ValueError):
    pass


class ResolutionError(SemitubeLabError, ValueError):
    pass


class SpecError(SemitubeLabError, ValueError):
    """A domain-spec document failed validation."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details if details is not None else []
