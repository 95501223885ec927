"""Energy-shaping control of a buck-boost converter feeding a constant power load."""

from .errors import (DomainError, IdaError, IntegrationError, NotFoundError,
                     PreconditionError, SingularityError)
from .model import Equilibrium, NormalizedParams, PhysicalParams, State, equilibrium_for, normalize

__version__ = "0.1.0"

__all__ = [
    "DomainError", "IdaError", "IntegrationError", "NotFoundError", "PreconditionError",
    "SingularityError", "Equilibrium", "NormalizedParams", "PhysicalParams", "State",
    "equilibrium_for", "normalize", "__version__",
]
