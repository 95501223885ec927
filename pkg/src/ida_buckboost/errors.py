"""Exception hierarchy shared by all modules."""


class IdaError(Exception):
    """Base class for errors raised by this package."""


class DomainError(IdaError, ValueError):
    """An argument lies outside the domain of an operation."""


class SingularityError(IdaError, ArithmeticError):
    """The state reached the 1/x2 singularity of the load term."""


class PreconditionError(IdaError, ValueError):
    """A documented precondition of an operation does not hold."""


class NotFoundError(IdaError, LookupError):
    """A search (e.g. for a secondary equilibrium) came back empty."""


class IntegrationError(IdaError, ArithmeticError):
    """Numerical integration produced a non-finite value."""
