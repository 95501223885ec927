"""Desired energy function, its derivatives, and the gain bounds that make it a Lyapunov function.

The closed loop is shaped to ``x' = F_d(x) grad H_d(x)`` where ``H_d`` solves the
matching equation::

    -x2 dH/dx1 + 2 x1 dH/dx2 = D - x1 + D/x2

The solution family is

    H_d = -(x2 + sqrt(2) D atan(sqrt(2) x1 / x2)) / 2
          - D atanh(x1 / r) / (2 r)
          + (k1 / 2) (r^2 + k2)^2,          r = sqrt(x1^2 + x2^2 / 2).

Note the inverse *hyperbolic* tangent: with ``atan`` in its place the function
does not satisfy the matching equation, while every derivative formula below
(gradient, Hessian, k2 and the equilibrium Hessian) is exact with ``atanh``.

All functions accept scalars or numpy arrays for the state components.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, PreconditionError
from .model import Equilibrium, assignability_residual

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)

#: Disagreement above which the bracketed bound replaces the closed form.
BOUND_AGREEMENT_TOL = 1e-9


@dataclass(frozen=True)
class GainSet:
    k1: float
    k2: float
    k1_prime: float
    k1_double_prime: float

    @property
    def k1_min(self) -> float:
        return max(self.k1_prime, self.k1_double_prime)


def _split(x):
    x1, x2 = x
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if np.any(x1 <= 0) or np.any(x2 <= 0):
        raise DomainError("state must lie in the open positive quadrant")
    return x1, x2


def _common(x1, x2):
    S = 2 * x1**2 + x2**2
    r = np.sqrt(S / 2)
    # x1/r lies in (0, 1) on the open quadrant.
    A = np.arctanh(x1 / r)
    return S, r, A


def f_d(x) -> np.ndarray:
    """Interconnection and damping matrix; its symmetric part is negative definite."""
    x1, x2 = _split(x)
    a12 = 2 * x2 / (x2 + 1)
    return np.array([[-x2 / x1, -a12], [a12, -2 * x1 / (x2 + 1) ** 2]])


def hamiltonian(x, D, k1, k2):
    x1, x2 = _split(x)
    S, r, A = _common(x1, x2)
    z = x1**2 + x2**2 / 2
    return (
        -0.5 * (x2 + SQRT2 * D * np.arctan(SQRT2 * x1 / x2))
        - D * A / (2 * r)
        + 0.5 * k1 * (z + k2) ** 2
    )


def grad(x, D, k1, k2) -> np.ndarray:
    x1, x2 = _split(x)
    S, r, A = _common(x1, x2)
    rootS = np.sqrt(S)
    g1 = -D * (1 + x2) / S + k1 * x1 * (2 * (k2 + x1**2) + x2**2) + SQRT2 * D * x1 * A / S**1.5
    g2 = (
        rootS * (2 * D * x1 * (1 + x2) + x2 * S * (-1 + 2 * k1 * (k2 + x1**2) * x2 + k1 * x2**3))
        + SQRT2 * D * x2**2 * A
    ) / (2 * x2 * S**1.5)
    return np.array([g1, g2])


def hessian(x, D, k1, k2) -> np.ndarray:
    x1, x2 = _split(x)
    S, r, A = _common(x1, x2)
    rootS = np.sqrt(S)
    h11 = k1 * (2 * k2 + 6 * x1**2 + x2**2) + (
        2 * D * x1 * (3 + 2 * x2) * S + SQRT2 * D * (x2**2 - 4 * x1**2) * rootS * A
    ) / S**3
    h12 = 2 * k1 * x1 * x2 + (
        D * (2 * x1**2 * x2**2 - 4 * x1**4 * (1 + x2) + x2**4 * (2 + x2))
        - 3 * SQRT2 * D * x1 * x2**2 * rootS * A
    ) / (x2 * S**3)
    h22 = 0.5 * k1 * (2 * (k2 + x1**2) + 3 * x2**2) + (
        -4 * D * x1 * (x1**2 + x2**2 * (2 + x2)) * S + 2 * SQRT2 * D * (x1**2 - x2**2) * x2**2 * rootS * A
    ) / (2 * x2**2 * S**3)
    return np.array([[h11, h12], [h12, h22]])


def pde_residual(x, D, k1, k2, gradient=None):
    """Residual of the matching equation; ``gradient`` overrides the closed-form gradient."""
    x1, x2 = _split(x)
    g1, g2 = grad(x, D, k1, k2) if gradient is None else gradient
    return -x2 * g1 + 2 * x1 * g2 - (D - x1 + D / x2)


def _check_equilibrium(eq: Equilibrium, D: float) -> tuple[float, float]:
    x1, x2 = float(eq.x1_star), float(eq.x2_star)
    if not (x1 > 0 and x2 > 0 and D > 0):
        raise DomainError("equilibrium and D must be positive")
    if abs(assignability_residual((x1, x2), D)) > 1e-9 * max(1.0, x1):
        raise PreconditionError(f"({x1}, {x2}) is not an assignable equilibrium for D={D}")
    return x1, x2


def compute_k2(eq: Equilibrium, D: float, k1: float) -> float:
    """Constant that places the critical point of ``H_d`` at the equilibrium."""
    if k1 == 0:
        raise PreconditionError("k1 must be nonzero to place the minimum")
    x1, x2 = float(eq.x1_star), float(eq.x2_star)
    S = 2 * x1 * x1 + x2 * x2
    A = math.atanh(x1 / math.sqrt(S / 2))
    bracket = D * (1 + x2) / (2 * x1 * S) - SQRT2 * D * x1 * A / (2 * x1 * S**1.5)
    return bracket / k1 - x2**2 / 2 - x1**2


def h_factor(eq: Equilibrium) -> float:
    """Polynomial weight of the k1 term in the published determinant expansion.

    Kept for reporting. The sign that actually governs the determinant bound is
    :func:`det_slope`; the two differ on part of the quadrant.
    """
    x1, x2 = eq.x1_star, eq.x2_star
    return (
        4 * x1**3 + 4 * x1**5 * x2**3 + 2 * x1**3 * x2**4 + x1 * x2**2
        + x1 * x2**7 - 8 * x1**7 - 4 * x1**5 * x2**2
    )


def det_slope(eq: Equilibrium) -> float:
    """d det(Hessian at x*) / d k1.

    With k2 chosen by :func:`compute_k2`, ``k1 (r*^2 + k2)`` does not depend on
    k1, so the Hessian at x* is ``M + k1 grad(r^2) grad(r^2)^T`` and its
    determinant is affine in k1 with this slope.
    """
    x1, x2 = eq.x1_star, eq.x2_star
    return (x2**3 + x2**2 - 2 * x1**2) / (x2 * (x2 + 1))


def k1_prime_closed_form(eq: Equilibrium, D: float) -> float:
    x1, x2 = _check_equilibrium(eq, D)
    S, r, A = _common(x1, x2)
    a = x2**2 * (1 + x2) + x1**2 * (8 + 6 * x2)
    return float((6 * SQRT2 * D * x1**3 * A / math.sqrt(S) - D * a) / (4 * x1**3 * S**2))


def k1_det_threshold_closed_form(eq: Equilibrium, D: float) -> float:
    """Value of k1 at which det(Hessian at x*) changes sign."""
    x1, x2 = _check_equilibrium(eq, D)
    P = x2**3 + x2**2 - 2 * x1**2
    if P == 0:
        raise PreconditionError("determinant does not depend on k1 at this equilibrium")
    S, r, A = _common(x1, x2)
    R = x2**4 * (1 + x2) ** 2 - 4 * x1**4 * (x2**2 + 5 * x2 + 5) - 2 * x1**2 * x2**2 * (3 * x2 + 4)
    return float(x2 * (3 * SQRT2 * A * x1 * math.sqrt(S) * P - R) / (2 * S**3 * (1 + x2) * P))


def hessian_at_equilibrium(eq: Equilibrium, D: float, k1: float) -> np.ndarray:
    return hessian(eq, D, k1, compute_k2(eq, D, k1))


def _minor(eq, D, which):
    def fn(k1):
        if k1 == 0:
            k1 = 1e-300
        H = hessian_at_equilibrium(eq, D, k1)
        return H[0, 0] if which == 1 else H[0, 0] * H[1, 1] - H[0, 1] ** 2

    return fn


def bracket_root(fn, guess: float, xtol: float = 1e-15) -> float:
    """Root of a scalar function of k1 by expanding a bracket around ``guess`` then Brent."""
    width = max(1e-3, 0.1 * abs(guess))
    for _ in range(80):
        lo, hi = guess - width, guess + width
        flo, fhi = fn(lo), fn(hi)
        if np.sign(flo) != np.sign(fhi):
            return float(brentq(fn, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500))
        width *= 2
    raise PreconditionError("no sign change found while bracketing the Hessian minor")


def k1_prime_bracketed(eq: Equilibrium, D: float) -> float:
    _check_equilibrium(eq, D)
    return bracket_root(_minor(eq, D, 1), k1_prime_closed_form(eq, D))


def k1_det_threshold_bracketed(eq: Equilibrium, D: float) -> float:
    _check_equilibrium(eq, D)
    return bracket_root(_minor(eq, D, 2), k1_det_threshold_closed_form(eq, D))


def _reconcile(name, closed, bracketed):
    if abs(closed - bracketed) > BOUND_AGREEMENT_TOL * max(1.0, abs(bracketed)):
        log.warning("%s closed form %.12g disagrees with bracketing %.12g; using bracketing",
                    name, closed, bracketed)
        return bracketed
    return closed


def k1_prime(eq: Equilibrium, D: float) -> float:
    """Lower bound on k1 for a positive (1,1) Hessian entry at the equilibrium."""
    return _reconcile("k1'", k1_prime_closed_form(eq, D), k1_prime_bracketed(eq, D))


def k1_det_threshold(eq: Equilibrium, D: float) -> float:
    return _reconcile("det threshold", k1_det_threshold_closed_form(eq, D),
                      k1_det_threshold_bracketed(eq, D))


def k1_double_prime(eq: Equilibrium, D: float) -> float:
    """Lower bound on k1 for a positive Hessian determinant at the equilibrium.

    Raises
    ------
    PreconditionError
        When :func:`det_slope` is not positive; the determinant condition is
        then an upper bound on k1 (or independent of it), not a lower bound.
    """
    _check_equilibrium(eq, D)
    if det_slope(eq) <= 0:
        raise PreconditionError(
            f"determinant slope {det_slope(eq):.6g} <= 0 at ({eq.x1_star}, {eq.x2_star}); "
            "no lower bound on k1 exists")
    return k1_det_threshold(eq, D)


def design_gains(eq: Equilibrium, D: float, k1: float, *, validate: bool = True) -> GainSet:
    """Bounds and k2 for a given k1; rejects k1 below the bounds when ``validate``."""
    kp, kpp = k1_prime(eq, D), k1_double_prime(eq, D)
    if validate and not k1 > max(kp, kpp):
        raise PreconditionError(f"k1={k1} does not exceed max(k1', k1'') = {max(kp, kpp):.6g}")
    return GainSet(k1=k1, k2=compute_k2(eq, D, k1), k1_prime=kp, k1_double_prime=kpp)
