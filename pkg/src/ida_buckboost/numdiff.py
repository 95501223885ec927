"""Central finite differences with one Richardson refinement."""

from __future__ import annotations

import numpy as np


def _step(xi: float, rel_step: float) -> float:
    return rel_step * max(1.0, abs(xi))


def jacobian(fn, x, rel_step=1e-6, richardson=True) -> np.ndarray:
    """Jacobian of ``fn: R^n -> R^m`` (or a scalar, giving a 1 x n row) at ``x``.

    With ``richardson`` the estimate is ``(4 J(h/2) - J(h)) / 3``, which cancels
    the second-order truncation term.
    """
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fn(x), dtype=float))
    J = np.empty((f0.size, x.size))

    def central(j, h):
        e = np.zeros_like(x)
        e[j] = h
        return (np.atleast_1d(np.asarray(fn(x + e), dtype=float))
                - np.atleast_1d(np.asarray(fn(x - e), dtype=float))) / (2 * h)

    for j in range(x.size):
        h = _step(x[j], rel_step)
        d = central(j, h)
        if richardson:
            d = (4 * central(j, h / 2) - d) / 3
        J[:, j] = d
    return J


def gradient(fn, x, rel_step=1e-6, richardson=True) -> np.ndarray:
    """Gradient of a scalar function."""
    return jacobian(fn, x, rel_step, richardson)[0]


def derivative(fn, t: float, rel_step=1e-6, richardson=True) -> float:
    """Derivative of a scalar function of one variable."""
    return float(jacobian(lambda v: fn(v[0]), [t], rel_step, richardson)[0, 0])
