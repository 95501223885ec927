"""Average model of a buck-boost converter feeding a constant power load.

Physical model (continuous conduction mode)::

    L di/dt = -(1 - u) v + u E
    C dv/dt = (1 - u) i - P / v

With ``x1 = sqrt(L/C) i / E``, ``x2 = v / E`` and ``tau = t / sqrt(L C)``
this becomes the normalized model used everywhere else in the package::

    x1' = -(1 - u) x2 + u
    x2' = (1 - u) x1 - D / x2,        D = (P / E^2) sqrt(L / C)

Functions accept scalars or numpy arrays; a state is anything that unpacks
into ``(x1, x2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularityError

#: Normalized voltage below which the load term D/x2 is treated as singular.
SINGULARITY_FLOOR = 1e-9


@dataclass(frozen=True)
class PhysicalParams:
    """Converter constants: inductance L [H], capacitance C [F], source E [V], load P [W]."""

    L: float
    C: float
    E: float
    P: float

    def __post_init__(self):
        for name in ("L", "C", "E", "P"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class NormalizedParams:
    D: float

    def __post_init__(self):
        if not (math.isfinite(self.D) and self.D > 0):
            raise DomainError(f"D must be positive, got {self.D!r}")


@dataclass(frozen=True)
class State:
    """Normalized state (x1, x2) in the open positive quadrant."""

    x1: float
    x2: float

    def __post_init__(self):
        if not (self.x1 > 0 and self.x2 > 0):
            raise DomainError(f"state must lie in the open positive quadrant, got ({self.x1}, {self.x2})")

    def __iter__(self):
        yield self.x1
        yield self.x2

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2])


@dataclass(frozen=True)
class Equilibrium:
    x1_star: float
    x2_star: float
    u_star: float

    @property
    def state(self) -> State:
        return State(self.x1_star, self.x2_star)

    def __iter__(self):
        yield self.x1_star
        yield self.x2_star


def normalize(p: PhysicalParams) -> NormalizedParams:
    """Return the dimensionless load power ``D = (P/E^2) sqrt(L/C)``."""
    return NormalizedParams(p.P / p.E**2 * math.sqrt(p.L / p.C))


def to_normalized(i, v, p: PhysicalParams) -> State:
    """Map inductor current [A] and output voltage [V] to the normalized state."""
    if not (i > 0 and v > 0):
        raise DomainError(f"current and voltage must be positive, got i={i!r}, v={v!r}")
    return State(math.sqrt(p.L / p.C) * i / p.E, v / p.E)


def from_normalized(x, p: PhysicalParams) -> tuple[float, float]:
    """Inverse of :func:`to_normalized`; returns ``(i, v)`` in amperes and volts."""
    x1, x2 = x
    return x1 * p.E * math.sqrt(p.C / p.L), x2 * p.E


def tau_of_t(t, p: PhysicalParams):
    return t / math.sqrt(p.L * p.C)


def t_of_tau(tau, p: PhysicalParams):
    return tau * math.sqrt(p.L * p.C)


def drift(x, D):
    """Drift vector ``f(x) = (-x2, x1 - D/x2)``."""
    x1, x2 = x
    return np.array([-x2, x1 - D / x2])


def input_vector(x):
    """Input vector ``g(x) = (x2 + 1, -x1)`` so that ``x' = f(x) + g(x) u``."""
    x1, x2 = x
    return np.array([x2 + 1.0, -x1])


def check_nonsingular(x2) -> None:
    if np.any(np.asarray(x2) < SINGULARITY_FLOOR):
        raise SingularityError(f"x2 below singularity floor {SINGULARITY_FLOOR:g}")


def vector_field(x, u, D):
    """Normalized model right-hand side for duty ratio ``u`` in [0, 1].

    Raises
    ------
    SingularityError
        If ``x2`` is below :data:`SINGULARITY_FLOOR`.
    DomainError
        If ``u`` lies outside [0, 1]; clamping is left to the caller.
    """
    x1, x2 = x
    check_nonsingular(x2)
    u_arr = np.asarray(u)
    if np.any((u_arr < 0) | (u_arr > 1)) or np.any(~np.isfinite(u_arr)):
        raise DomainError(f"duty ratio must lie in [0, 1], got {u!r}")
    return np.array([-(1 - u) * x2 + u, (1 - u) * x1 - D / x2])


def equilibrium_for(x2_star: float, D: float) -> Equilibrium:
    """Assignable equilibrium with output voltage ``x2_star``."""
    if not (x2_star > 0 and D > 0):
        raise DomainError(f"x2_star and D must be positive, got x2_star={x2_star!r}, D={D!r}")
    return Equilibrium(D / x2_star + D, x2_star, x2_star / (1 + x2_star))


def assignability_residual(x, D):
    """``x1 - D/x2 - D``; zero exactly on the assignable equilibrium set."""
    x1, x2 = x
    return x1 - D / x2 - D
