"""State-feedback laws: energy-shaping synthesis and the linear PD baseline.

All laws return the raw real-valued duty ratio. Clamping to [0, 1] is the
simulator's job.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import energy, transcription
from .model import Equilibrium, drift, input_vector

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class PdGains:
    kp: float
    kd: float


@dataclass(frozen=True)
class StabilityCone:
    """Gains are locally stabilizing iff ``m2 kp + b2 > kd > m1 kp + b1``."""

    m1: float
    b1: float
    m2: float
    b2: float


def ida_control(x, D, k1, k2):
    """Duty ratio that makes the closed loop equal ``F_d(x) grad H_d(x)``.

    ``u = (g^T g)^-1 g^T (F_d grad H_d - f)``; exact because ``H_d`` solves the
    matching equation.
    """
    g = input_vector(x)
    target = np.einsum("ij...,j...->i...", energy.f_d(x), energy.grad(x, D, k1, k2)) - drift(x, D)
    return np.einsum("i...,i...->...", g, target) / np.einsum("i...,i...->...", g, g)


def ida_control_scalar(x1: float, x2: float, D: float, k1: float, k2: float) -> float:
    """Same law as :func:`ida_control` for plain floats, without numpy overhead."""
    S = 2 * x1 * x1 + x2 * x2
    rootS = math.sqrt(S)
    A = math.atanh(x1 / math.sqrt(S / 2))
    S15 = S * rootS
    g1 = -D * (1 + x2) / S + k1 * x1 * (2 * (k2 + x1 * x1) + x2 * x2) + SQRT2 * D * x1 * A / S15
    g2 = (rootS * (2 * D * x1 * (1 + x2) + x2 * S * (-1 + 2 * k1 * (k2 + x1 * x1) * x2 + k1 * x2**3))
          + SQRT2 * D * x2 * x2 * A) / (2 * x2 * S15)
    a12 = 2 * x2 / (x2 + 1)
    t1 = -x2 / x1 * g1 - a12 * g2 + x2
    t2 = a12 * g1 - 2 * x1 / (x2 + 1) ** 2 * g2 - (x1 - D / x2)
    return ((x2 + 1) * t1 - x1 * t2) / (x1 * x1 + (x2 + 1) ** 2)


def ida_control_closed_form(x, D, k1, x2_star, *, transcription_variant="corrected"):
    """Explicit expansion of :func:`ida_control` with k2 computed internally.

    ``transcription_variant="printed"`` evaluates the published expression
    literally; ``"corrected"`` fixes the inverse tangent and the load-term
    placement, and then agrees with :func:`ida_control` to rounding.
    """
    if transcription_variant == "printed":
        return transcription.explicit_control(x, D, k1, x2_star, inverse_tangent="atan", load_inside=True)
    if transcription_variant == "corrected":
        return transcription.explicit_control(x, D, k1, x2_star, inverse_tangent="atanh", load_inside=False)
    raise ValueError(f"unknown transcription variant {transcription_variant!r}")


def pd_control(x, eq: Equilibrium, gains: PdGains):
    x1, x2 = x
    return eq.u_star + gains.kp * (x1 - eq.x1_star) + gains.kd * (x2 - eq.x2_star)


def pd_jacobian(eq: Equilibrium, D, gains: PdGains) -> np.ndarray:
    """Linearization of the PD closed loop at the equilibrium."""
    kp, kd = gains.kp, gains.kd
    x2 = eq.x2_star
    return np.array([
        [kp * (1 + x2), kd + kd * x2 - 1 / (1 + x2)],
        [1 / (1 + x2) - D * kp * (1 + x2) / x2, -D * (-1 + kd * x2 * (1 + x2)) / x2**2],
    ])


def pd_trace(eq: Equilibrium, D, gains: PdGains) -> float:
    x2 = eq.x2_star
    return gains.kp * (1 + x2) - gains.kd * D * (1 / x2 + 1) + D / x2**2


def pd_det(eq: Equilibrium, D, gains: PdGains) -> float:
    x2 = eq.x2_star
    return gains.kp * D / x2**2 - gains.kd + 1 / (x2 + 1) ** 2


def pd_stability_cone(eq: Equilibrium, D) -> StabilityCone:
    x2 = eq.x2_star
    return StabilityCone(m1=x2 / D, b1=1 / (x2 + x2**2), m2=D / x2**2, b2=1 / (1 + x2) ** 2)


def pd_is_hurwitz(gains: PdGains, cone: StabilityCone) -> bool:
    """Strict cone test; points on the boundary count as not stable."""
    return bool(cone.m2 * gains.kp + cone.b2 > gains.kd > cone.m1 * gains.kp + cone.b1)
