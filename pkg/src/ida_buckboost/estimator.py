"""Immersion-and-invariance estimator of the normalized load power D.

    D_hat = -(gamma / 2) x2^2 + d_i
    d_i'  = gamma x1 x2 (1 - u) + (gamma^2 / 2) x2^2 - gamma d_i

The estimation error obeys ``e' = -gamma e`` whatever the input, so
``D_hat(tau) - D = (D_hat(0) - D) exp(-gamma tau)`` for constant D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class EstimatorState:
    d_i: float
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError(f"adaptation gain must be positive, got {self.gamma!r}")


def d_hat(x2, s: EstimatorState):
    return -0.5 * s.gamma * x2**2 + s.d_i


def d_i_dot(x, u, s: EstimatorState):
    x1, x2 = x
    g = s.gamma
    return g * x1 * x2 * (1 - u) + 0.5 * g**2 * x2**2 - g * s.d_i


def d_i_for(d_hat0: float, x2: float, gamma: float) -> float:
    """Internal state that makes the estimate equal ``d_hat0`` at voltage ``x2``."""
    return d_hat0 + 0.5 * gamma * x2**2


def predicted_error(err0, gamma, tau):
    return err0 * np.exp(-gamma * np.asarray(tau)) if np.ndim(tau) else err0 * math.exp(-gamma * tau)
