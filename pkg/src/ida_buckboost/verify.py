"""Invariant checks shared by the ``verify`` command and the test suite.

Each check returns a :class:`Check` with the measured worst-case error and the
tolerance it is held to.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import qmc

from . import analysis, controllers, energy, numdiff, sim, transcription
from .model import Equilibrium, drift, equilibrium_for, input_vector, vector_field


@dataclass
class Check:
    name: str
    passed: bool
    worst_error: float
    tolerance: float
    detail: str = ""
    informational: bool = False


def sample_points(n: int, seed: int = 0, box=(0.1, 10.0)) -> np.ndarray:
    """Scrambled Halton points in ``box x box``, shape (n, 2)."""
    lo, hi = box
    return qmc.scale(qmc.Halton(d=2, scramble=True, seed=seed).random(n), [lo, lo], [hi, hi])


def _check(name, err, tol, detail="", informational=False) -> Check:
    err = float(err)
    return Check(name, bool(err <= tol), err, tol, detail, informational)


def check_matching(pts, D, k1, k2, tol=1e-10) -> Check:
    x = (pts[:, 0], pts[:, 1])
    u = controllers.ida_control(x, D, k1, k2)
    res = drift(x, D) + input_vector(x) * u - analysis.closed_loop_target(x, D, k1, k2)
    return _check("matching_identity", np.max(np.hypot(*res)), tol, "max |f + g u - F_d grad H_d|")


def check_pde(pts, D, k1, k2, tol=1e-8) -> Check:
    r = energy.pde_residual((pts[:, 0], pts[:, 1]), D, k1, k2)
    return _check("pde_residual", np.max(np.abs(r)), tol, "max |matching equation residual|")


def check_gradient_fd(pts, D, k1, k2, tol=1e-6) -> Check:
    worst = 0.0
    for p in pts:
        g = energy.grad(p, D, k1, k2)
        g_fd = numdiff.gradient(lambda v: energy.hamiltonian(v, D, k1, k2), p)
        worst = max(worst, np.linalg.norm(g - g_fd) / max(1.0, np.linalg.norm(g)))
    return _check("gradient_fd", worst, tol, "relative error (unit floor) against central differences")


def check_hessian_fd(pts, D, k1, k2, tol=1e-5) -> Check:
    worst = 0.0
    for p in pts:
        H = energy.hessian(p, D, k1, k2)
        H_fd = numdiff.jacobian(lambda v: energy.grad(v, D, k1, k2), p)
        worst = max(worst, np.linalg.norm(H - H_fd) / max(1.0, np.linalg.norm(H)))
    return _check("hessian_fd", worst, tol, "relative error (unit floor) against differenced gradient")


def check_gradient_at_equilibrium(eq, D, k1, k2, tol=1e-10) -> Check:
    g = energy.grad(eq, D, k1, k2)
    return _check("gradient_at_equilibrium", np.linalg.norm(g), tol, "|grad H_d(x*)|")


def check_minimum_at_equilibrium(eq, D, k1, k2) -> Check:
    lam = np.linalg.eigvalsh(energy.hessian(eq, D, k1, k2))
    return Check("hessian_positive_at_equilibrium", bool(lam.min() > 0), float(-lam.min()), 0.0,
                 f"smallest eigenvalue {lam.min():.6g}")


def check_dissipation(pts) -> Check:
    F = energy.f_d((pts[:, 0], pts[:, 1]))
    sym = 0.5 * (F + np.swapaxes(F, 0, 1))
    lam = np.linalg.eigvalsh(np.moveaxis(sym, -1, 0))
    return Check("damping_negative_definite", bool(lam.max() < 0), float(lam.max()), 0.0,
                 "largest eigenvalue of the symmetric part of F_d")


def check_closed_form(pts, D, k1, x2_star, tol=1e-9) -> Check:
    x = (pts[:, 0], pts[:, 1])
    k2 = energy.compute_k2(equilibrium_for(x2_star, D), D, k1)
    ref = controllers.ida_control(x, D, k1, k2)
    alt = controllers.ida_control_closed_form(x, D, k1, x2_star)
    return _check("closed_form_agreement", np.max(np.abs(ref - alt)), tol, "corrected explicit law vs generic law")


def check_printed_closed_form(pts, D, k1, x2_star) -> Check:
    rep = transcription.discrepancy_report(pts, D, k1, x2_star)
    detail = "agrees" if rep.agrees else f"first divergent subterm: {rep.first_divergent}"
    return Check("printed_closed_form", rep.agrees, rep.max_abs_error, 1e-9, detail, informational=True)


def check_bound_agreement(eq, D) -> Check:
    e1 = abs(energy.k1_prime_closed_form(eq, D) - energy.k1_prime_bracketed(eq, D))
    e2 = abs(energy.k1_det_threshold_closed_form(eq, D) - energy.k1_det_threshold_bracketed(eq, D))
    return _check("gain_bound_agreement", max(e1, e2), 1e-9, "closed form vs root bracketing of the Hessian minors")


def check_zero_dynamics(eq, D, n=50) -> list[Check]:
    x2 = np.linspace(0.25 * eq.x2_star, 2 * eq.x2_star, n)
    u = analysis.zd_current_fixed_input(x2)
    ref = np.array([vector_field((eq.x1_star, v), w, D)[1] for v, w in zip(x2, u)])
    c1 = _check("zero_dynamics_current", np.max(np.abs(ref - analysis.zd_current_fixed(x2, eq, D))), 1e-12)
    # Keep u = 1 - D/(x1 x2*) inside [0, 1].
    x1 = np.linspace(max(0.5 * eq.x1_star, 1.01 * D / eq.x2_star), 2 * eq.x1_star, n)
    u = analysis.zd_voltage_fixed_input(x1, eq, D)
    ref = np.array([vector_field((v, eq.x2_star), w, D)[0] for v, w in zip(x1, u)])
    c2 = _check("zero_dynamics_voltage", np.max(np.abs(ref - analysis.zd_voltage_fixed(x1, eq, D))), 1e-12)
    s = analysis.zd_current_fixed_slope(eq, D)
    w = analysis.zd_voltage_fixed_slope(eq, D)
    c3 = Check("zero_dynamics_unstable", bool(s > 0 and w > 0), float(-min(s, w)), 0.0,
               f"slopes s'={s:.6g}, w'={w:.6g}")
    return [c1, c2, c3]


def check_pd_cone(eq, D, n=400, seed=0) -> Check:
    rng = np.random.default_rng(seed)
    cone = controllers.pd_stability_cone(eq, D)
    mismatches, checked = 0, 0
    for kp, kd in rng.uniform([-2.0, -5.0], [2.0, 2.0], size=(n, 2)):
        gains = controllers.PdGains(kp, kd)
        lam = np.linalg.eigvals(controllers.pd_jacobian(eq, D, gains))
        if np.min(np.abs(lam.real)) < 1e-9:
            continue
        checked += 1
        mismatches += controllers.pd_is_hurwitz(gains, cone) != bool(np.all(lam.real < 0))
    return Check("pd_cone_matches_eigenvalues", mismatches == 0, float(mismatches), 0.0,
                 f"{checked} random gain pairs")


def check_estimator(D, gamma=5.0, tol=1e-3) -> Check:
    ctrl = sim.ControllerSpec("open_loop", 4.0, u_signal=lambda t: 0.8 + 0.05 * math.sin(3 * t))
    x0 = (D / 4 + D, 4.0)
    s = sim.Scenario(ctrl, x0, [(0.0, D)], 6.0 / gamma, step=1e-3, gamma=gamma, d_hat_init=D + 0.5)
    tr = sim.simulate(s)
    e = np.abs(tr.d_hat - tr.d_true)
    slope = np.polyfit(tr.tau[1:], np.log(e[1:]), 1)[0]
    return _check("estimator_decay_rate", abs(slope + gamma) / gamma, tol, f"slope {slope:.9g} vs {-gamma}")


def check_rk4_order() -> Check:
    def err(h):
        y = np.array([1.0])
        for _ in range(int(round(1 / h))):
            y = sim.rk4_step(lambda v: -v, y, h)
        return abs(y[0] - math.exp(-1))

    ratio = err(0.1) / err(0.05)
    return _check("rk4_order", abs(ratio - 16) / 16, 0.1, f"error ratio on halving {ratio:.4f}")


def check_saturation_and_equilibrium(eq, D, k1) -> list[Check]:
    ctrl = sim.ControllerSpec("ida", eq.x2_star, k1=k1)
    tr = sim.simulate(sim.Scenario(ctrl, (0.4, 0.9 * eq.x2_star), [(0.0, D)], 2.0, step=1e-3))
    clipped = np.clip(tr.u_raw, 0, 1)
    bad = np.count_nonzero(tr.u_applied != clipped) + np.count_nonzero(tr.saturated != (tr.u_raw != clipped))
    c1 = Check("saturation_honesty", bad == 0, float(bad), 0.0, f"{tr.saturation_count} saturated samples")
    tr = sim.simulate(sim.Scenario(ctrl, (eq.x1_star, eq.x2_star), [(0.0, D)], 5.0, step=1e-3))
    dev = np.max(np.hypot(tr.x1 - eq.x1_star, tr.x2 - eq.x2_star))
    c2 = _check("equilibrium_is_stationary", dev, 1e-9)
    return [c1, c2]


def run_all(eq: Equilibrium, D, k1, k2, *, samples=1000, seed=0, box=(0.1, 10.0), pd_gains=None) -> dict:
    """Run every check and return a report document."""
    pts = sample_points(samples, seed, box)
    fd_pts = pts[: min(len(pts), 200)]
    checks = [
        check_matching(pts, D, k1, k2),
        check_pde(pts, D, k1, k2),
        check_gradient_fd(fd_pts, D, k1, k2),
        check_hessian_fd(fd_pts, D, k1, k2),
        check_gradient_at_equilibrium(eq, D, k1, k2),
        check_minimum_at_equilibrium(eq, D, k1, k2),
        check_dissipation(pts),
        check_closed_form(pts, D, k1, eq.x2_star),
        check_printed_closed_form(pts, D, k1, eq.x2_star),
        check_bound_agreement(eq, D),
        *check_zero_dynamics(eq, D),
        check_pd_cone(eq, D, seed=seed),
        check_estimator(D),
        check_rk4_order(),
        *check_saturation_and_equilibrium(eq, D, k1),
    ]
    if pd_gains is not None:
        cone = controllers.pd_stability_cone(eq, D)
        lam = np.linalg.eigvals(controllers.pd_jacobian(eq, D, pd_gains))
        agree = controllers.pd_is_hurwitz(pd_gains, cone) == bool(np.all(lam.real < 0))
        checks.append(Check("pd_gains_classification", agree, float(np.max(lam.real)), 0.0,
                            "cone test agrees with eigenvalues; worst_error is the largest real part"))
    required = [c for c in checks if not c.informational]
    return {
        "passed": all(c.passed for c in required),
        "samples": samples,
        "seed": seed,
        "k1": k1,
        "k2": k2,
        "properties": [asdict(c) for c in checks],
    }
