"""Literal transcriptions of the published closed forms.

These exist only to be compared against the derived implementations in
:mod:`ida_buckboost.energy` and :mod:`ida_buckboost.controllers`. Each function
reproduces the printed expression as written, including its typos:

* ``atan(x1 / r)`` where the matching equation requires ``atanh(x1 / r)``;
* the load term ``-D(1+x2)/S`` placed inside the ``k1 x1 (...)`` factor of the
  explicit control law;
* ``x1`` instead of ``x1^3`` in the numerator of the (1,1)-entry bound;
* ``(2 x1^2 + x2^3)^2`` in the general (2,2) Hessian entry.

``inverse_tangent`` switches between the printed ``"atan"`` and the corrected
``"atanh"`` so the two sources of disagreement can be separated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import energy
from .model import drift, input_vector

SQRT2 = math.sqrt(2.0)


def _T(x1, x2, inverse_tangent):
    r = np.sqrt(x1**2 + x2**2 / 2)
    return np.arctan(x1 / r) if inverse_tangent == "atan" else np.arctanh(x1 / r)


def hamiltonian(x, D, k1, k2, inverse_tangent="atan"):
    x1, x2 = x
    r = np.sqrt(x1**2 + x2**2 / 2)
    return (-0.5 * (x2 + SQRT2 * D * np.arctan(SQRT2 * x1 / x2))
            - D * _T(x1, x2, inverse_tangent) / (2 * r)
            + 0.5 * k1 * (x1**2 + x2**2 / 2 + k2) ** 2)


def gradient(x, D, k1, k2, inverse_tangent="atan"):
    x1, x2 = x
    S = 2 * x1**2 + x2**2
    T = _T(x1, x2, inverse_tangent)
    g1 = -D * (1 + x2) / S + k1 * x1 * (2 * (k2 + x1**2) + x2**2) + SQRT2 * D * x1 * T / S**1.5
    g2 = (np.sqrt(S) * (2 * D * x1 * (1 + x2) + x2 * S * (-1 + 2 * k1 * (k2 + x1**2) * x2 + k1 * x2**3))
          + SQRT2 * D * x2**2 * T) / (2 * x2 * S**1.5)
    return np.array([g1, g2])


def hessian_22(x, D, k1, k2, inverse_tangent="atan"):
    x1, x2 = x
    S = 2 * x1**2 + x2**2
    T = _T(x1, x2, inverse_tangent)
    return (S * (k1 * (2 * (k2 + x1**2) + 3 * x2**2) * (2 * x1**2 + x2**3) ** 2
                 - 4 * D * x1 * (x1**2 + x2**2 * (2 + x2)))
            + 2 * SQRT2 * D * (x1**2 - x2**2) * x2**2 * np.sqrt(S) * T) / (2 * x2**2 * S**3)


def k2(x1s, x2s, D, k1, inverse_tangent="atan"):
    S = 2 * x1s**2 + x2s**2
    T = _T(x1s, x2s, inverse_tangent)
    return (1 / k1) * (D * (1 + x2s) / (2 * x1s * S) - SQRT2 * D * x1s * T / (2 * x1s * S**1.5)) \
        - x2s**2 / 2 - x1s**2


def k1_prime(x1s, x2s, D, inverse_tangent="atan"):
    S = 2 * x1s**2 + x2s**2
    T = _T(x1s, x2s, inverse_tangent)
    a = x2s**2 * (1 + x2s) + x1s**2 * (8 + 6 * x2s)
    return (6 * SQRT2 * D * x1s * T / math.sqrt(S) - D * a) / (4 * x1s**3 * S**2)


def k1_double_prime(x1s, x2s, D, inverse_tangent="atan"):
    S = 2 * x1s**2 + x2s**2
    Q = _T(x1s, x2s, inverse_tangent) / math.sqrt(S)
    a = x2s**2 * (1 + x2s) + x1s**2 * (8 + 6 * x2s)
    h = energy.h_factor(_Eq(x1s, x2s))
    num = (2 * D**2 * a * (-4 * x1s**4 + x2s**4 * (1 + x2s) - x1s**2 * x2s**2 * (3 + x2s))
           - 2 * x1s**2 * (x2s**2 * (2 + x2s) - 2 * x1s**2 * (2 + 2 * x2s)) ** 2
           - 3 * SQRT2 * x1s * x2s**4 * a * Q
           - 6 * SQRT2 * D * x1s**3 * (-4 * x1s**4 + x2s**4 * (1 + x2s) - 2 * x1s**2 * x2s**2 * (3 + x2s)) * Q)
    return -num / (D * S**2 * h)


@dataclass(frozen=True)
class _Eq:
    x1_star: float
    x2_star: float


def voltage_zero_dynamics(x1, x1s, D):
    """Voltage-fixed zero dynamics as printed: ``1 - (x1* - D) / x1``."""
    return 1 - (x1s - D) / x1


def voltage_zero_dynamics_slope(x1s, D):
    return (x1s - D) / x1s**2


#: Lower intercept of the PD stability cone as printed for x2* = 4.
PD_CONE_B1_PRINTED = 0.0588


# --- explicit control law -------------------------------------------------------------

def _law_terms(x, D, k1, x2s, inverse_tangent, load_inside):
    x1, x2 = x
    x1s = D / x2s + D
    kk2 = k2(x1s, x2s, D, k1, inverse_tangent)
    S = 2 * x1**2 + x2**2
    T = _T(x1, x2, inverse_tangent)
    if load_inside:
        grad1 = (k1 * x1 * (2 * (kk2 + x1**2) + x2**2 - D * (1 + x2) / S)
                 + SQRT2 * D * x1 * T / S**1.5)
    else:
        grad1 = (k1 * x1 * (2 * (kk2 + x1**2) + x2**2) - D * (1 + x2) / S
                 + SQRT2 * D * x1 * T / S**1.5)
    grad2 = (np.sqrt(S) * (2 * D * x1 * (1 + x2) + x2 * S * (-1 + 2 * k1 * x2 * (kk2 + x1**2) + k1 * x2**3))
             + SQRT2 * D * x2**2 * T) / (2 * x2 * S**1.5)
    return {
        "normalization": 1 / (x1**2 + (x2 + 1) ** 2),
        "feedforward": x2 * (x2 + 1) + x1 * (x1 - D / x2),
        "weight_x1": -(x2 * (x2 + 1) / x1 + 2 * x1 * x2 / (x2 + 1)),
        "grad_x1": grad1,
        "weight_x2": 2 * x1**2 / (x2 + 1) ** 2 - 2 * x2,
        "grad_x2": grad2,
        "k2": kk2,
    }


def explicit_control(x, D, k1, x2_star, *, inverse_tangent="atan", load_inside=True):
    """The explicit state-feedback law; defaults reproduce the printed expression."""
    t = _law_terms(x, D, k1, x2_star, inverse_tangent, load_inside)
    return t["normalization"] * (t["feedforward"] + t["weight_x1"] * t["grad_x1"]
                                 + t["weight_x2"] * t["grad_x2"])


@dataclass
class DiscrepancyReport:
    """Where a transcription of the explicit law first departs from the generic synthesis."""

    agrees: bool
    max_abs_error: float
    worst_point: tuple[float, float] | None
    first_divergent: str | None
    terms: dict[str, float] = field(default_factory=dict)
    causes: dict[str, float] = field(default_factory=dict)

    def to_dict(self):
        return {
            "agrees": self.agrees,
            "max_abs_error": self.max_abs_error,
            "worst_point": list(self.worst_point) if self.worst_point else None,
            "first_divergent": self.first_divergent,
            "terms": self.terms,
            "causes": self.causes,
        }


_ORDER = ("normalization", "feedforward", "weight_x1", "grad_x1", "weight_x2", "grad_x2")


def discrepancy_report(points, D, k1, x2_star, *, inverse_tangent="atan", load_inside=True,
                       tol=1e-9, term_tol=1e-12) -> DiscrepancyReport:
    """Compare the explicit law against the generic synthesis subterm by subterm.

    ``points`` has shape (N, 2). Term errors are reported at the point of largest
    control disagreement; ``first_divergent`` names the earliest term (in the
    order the printed law is read) whose error exceeds ``term_tol``, suffixed by
    the inner causes that explain it.
    """
    from .controllers import ida_control

    pts = np.asarray(points, dtype=float)
    x = (pts[:, 0], pts[:, 1])
    x1s = D / x2_star + D
    eq = _Eq(x1s, x2_star)
    kk2 = energy.compute_k2(eq, D, k1)
    u_ref = ida_control(x, D, k1, kk2)
    u_lit = explicit_control(x, D, k1, x2_star, inverse_tangent=inverse_tangent, load_inside=load_inside)
    err = np.abs(u_lit - u_ref)
    worst = int(np.argmax(err))
    max_err = float(err[worst])
    if max_err <= tol:
        return DiscrepancyReport(True, max_err, None, None)

    xp = (pts[worst, 0], pts[worst, 1])
    lit = _law_terms(xp, D, k1, x2_star, inverse_tangent, load_inside)
    g = input_vector(xp)
    gF = g @ energy.f_d(xp)
    gr = energy.grad(xp, D, k1, kk2)
    ref = {
        "normalization": 1 / (g @ g),
        "feedforward": -(g @ drift(xp, D)),
        "weight_x1": gF[0],
        "grad_x1": gr[0],
        "weight_x2": gF[1],
        "grad_x2": gr[1],
    }
    terms = {name: float(abs(lit[name] - ref[name])) for name in _ORDER}
    causes = {
        "k2": float(abs(lit["k2"] - kk2)),
        "inverse_tangent": float(abs(_T(xp[0], xp[1], inverse_tangent) - _T(xp[0], xp[1], "atanh"))),
        "load_term_placement": float(abs(k1 * xp[0] * D * (1 + xp[1]) / (2 * xp[0] ** 2 + xp[1] ** 2)
                                         - D * (1 + xp[1]) / (2 * xp[0] ** 2 + xp[1] ** 2)))
        if load_inside else 0.0,
    }
    first = next((name for name in _ORDER if terms[name] > term_tol), None)
    if first is not None:
        active = [c for c, v in causes.items() if v > term_tol]
        if active:
            first = f"{first} > {', '.join(active)}"
    return DiscrepancyReport(False, max_err, (float(xp[0]), float(xp[1])), first, terms, causes)
