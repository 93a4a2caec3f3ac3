"""Exception types shared across the package."""


class ListMatchError(Exception):
    """Base class for all package errors."""


class ConfigError(ListMatchError, ValueError):
    """A market configuration or CLI parameter is invalid."""


class DomainError(ListMatchError, ValueError):
    """An argument lies outside the domain of a function."""


class SizeGuardError(ListMatchError, ValueError):
    """An exact computation would exceed its memory or work budget."""


class SolverError(ListMatchError, RuntimeError):
    """A numerical integrator or quadrature failed."""


class NotFoundError(ListMatchError, RuntimeError):
    """A root search found no sign change on its bracket."""


class ConsistencyError(ListMatchError, RuntimeError):
    """Two estimators of the same quantity disagree beyond tolerance."""
