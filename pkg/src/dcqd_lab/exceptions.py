"""Exception types raised by the toolkit."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class NotPSDError(ValueError):
    """A matrix expected to be positive semidefinite has a significantly negative eigenvalue."""


class PhysicalityError(ValueError):
    """Channel parameters describe an unphysical process (e.g. T2 > 2 T1)."""


class DegenerateConfigurationError(ValueError):
    """A probe/measurement configuration does not determine the process (singular Lambda)."""


class ConstructionError(RuntimeError):
    """A circuit construction failed its validation check."""


class InsufficientDataError(ValueError):
    """Too few data points for the requested fit."""
