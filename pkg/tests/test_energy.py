import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle_values as ov
from conftest import K1
from ida_buckboost import energy, numdiff, transcription
from ida_buckboost.errors import DomainError, PreconditionError
from ida_buckboost.model import Equilibrium, equilibrium_for

coord = st.floats(min_value=0.05, max_value=10.0, allow_nan=False)


def test_values_at_reference_point(D, k2):
    assert energy.hamiltonian((1.0, 1.0), D, K1, k2) == pytest.approx(ov.H_AT_11, rel=1e-13)
    np.testing.assert_allclose(energy.grad((1.0, 1.0), D, K1, k2), ov.GRAD_AT_11, rtol=1e-12)
    H = energy.hessian((1.0, 1.0), D, K1, k2)
    np.testing.assert_allclose([H[0, 0], H[0, 1], H[1, 1]], ov.HESS_AT_11, rtol=1e-11)


def test_minimum_value(eq, D, k2):
    assert energy.hamiltonian(eq, D, K1, k2) == pytest.approx(ov.H_AT_EQUILIBRIUM, rel=1e-14)


def test_hessian_at_equilibrium(eq, D):
    H = energy.hessian_at_equilibrium(eq, D, K1)
    np.testing.assert_allclose([H[0, 0], H[0, 1], H[1, 1]], ov.HESSIAN_AT_EQUILIBRIUM, rtol=1e-11)
    assert np.all(np.linalg.eigvalsh(H) > 0)


def test_pde_residual_sweep(quadrant_points, D, k2):
    r = energy.pde_residual((quadrant_points[:, 0], quadrant_points[:, 1]), D, K1, k2)
    assert np.max(np.abs(r)) < 1e-8


@settings(max_examples=200, deadline=None)
@given(x1=coord, x2=coord, k1=st.floats(-1, 1), k2=st.floats(-10, 10), D=st.floats(0.01, 5))
def test_pde_holds_for_any_gains(x1, x2, k1, k2, D):
    assert abs(energy.pde_residual((x1, x2), D, k1, k2)) < 1e-8 * max(1.0, abs(k1) * (x1 + x2) ** 3)


@settings(max_examples=100, deadline=None)
@given(x1=coord, x2=coord)
def test_gradient_matches_finite_differences(x1, x2, D, k2):
    g = energy.grad((x1, x2), D, K1, k2)
    g_fd = numdiff.gradient(lambda v: energy.hamiltonian(v, D, K1, k2), [x1, x2])
    assert np.linalg.norm(g - g_fd) <= 1e-6 * max(1.0, np.linalg.norm(g))


@settings(max_examples=100, deadline=None)
@given(x1=coord, x2=coord)
def test_hessian_matches_finite_differences(x1, x2, D, k2):
    H = energy.hessian((x1, x2), D, K1, k2)
    H_fd = numdiff.jacobian(lambda v: energy.grad(v, D, K1, k2), [x1, x2])
    assert np.linalg.norm(H - H_fd) <= 1e-5 * max(1.0, np.linalg.norm(H))


def test_printed_energy_with_arctan_violates_matching(D, k2):
    # The atan form of the energy is not a solution; differentiate it numerically.
    x = np.array([1.0, 1.0])
    for kind, expect_zero in (("atan", False), ("atanh", True)):
        g = numdiff.gradient(lambda v: transcription.hamiltonian(v, D, K1, k2, inverse_tangent=kind), x)
        r = energy.pde_residual(x, D, K1, k2, gradient=g)
        assert (abs(r) < 1e-8) == expect_zero, (kind, r)


def test_printed_gradient_with_arctan_is_not_a_gradient(D, k2):
    x = np.array([1.3, 2.1])
    for kind, exact in (("atan", False), ("atanh", True)):
        J = numdiff.jacobian(lambda v: transcription.gradient(v, D, K1, k2, inverse_tangent=kind), x)
        assert (abs(J[0, 1] - J[1, 0]) < 1e-8) == exact


def test_printed_hessian_22_typo(D, k2):
    x = (1.3, 2.1)
    assert transcription.hessian_22(x, D, K1, k2, "atanh") != pytest.approx(energy.hessian(x, D, K1, k2)[1, 1])


def test_k2_value(eq, D):
    assert energy.compute_k2(eq, D, K1) == pytest.approx(ov.K2_AT_K1_001, rel=1e-13)
    assert transcription.k2(eq.x1_star, eq.x2_star, D, K1, "atanh") == pytest.approx(ov.K2_AT_K1_001, rel=1e-13)


@settings(max_examples=100, deadline=None)
@given(x2s=st.floats(0.2, 10), D=st.floats(0.05, 3), k1=st.floats(1e-3, 1))
def test_k2_places_critical_point(x2s, D, k1):
    eq = equilibrium_for(x2s, D)
    k2 = energy.compute_k2(eq, D, k1)
    g = energy.grad(eq, D, k1, k2)
    assert np.linalg.norm(g) <= 1e-9 * max(1.0, abs(k1 * k2) * (eq.x1_star + x2s))


def test_k2_needs_nonzero_k1(eq, D):
    with pytest.raises(PreconditionError):
        energy.compute_k2(eq, D, 0.0)


def test_bounds_match_oracle(eq, D):
    assert energy.k1_prime_closed_form(eq, D) == pytest.approx(ov.K1_PRIME, rel=1e-12)
    assert energy.k1_prime_bracketed(eq, D) == pytest.approx(ov.K1_PRIME, rel=1e-12)
    assert energy.k1_det_threshold_closed_form(eq, D) == pytest.approx(ov.DET_THRESHOLD, rel=1e-11)
    assert energy.k1_det_threshold_bracketed(eq, D) == pytest.approx(ov.DET_THRESHOLD, rel=1e-11)
    assert energy.k1_double_prime(eq, D) == pytest.approx(ov.DET_THRESHOLD, rel=1e-11)


def test_hessian_minors_vanish_at_bounds(eq, D):
    H = energy.hessian_at_equilibrium(eq, D, energy.k1_prime(eq, D))
    assert abs(H[0, 0]) < 1e-12
    H = energy.hessian_at_equilibrium(eq, D, energy.k1_det_threshold(eq, D))
    assert abs(np.linalg.det(H)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(x2s=st.floats(0.3, 8), D=st.floats(0.05, 3))
def test_closed_forms_agree_with_bracketing(x2s, D):
    eq = equilibrium_for(x2s, D)
    assert energy.k1_prime_closed_form(eq, D) == pytest.approx(energy.k1_prime_bracketed(eq, D), rel=1e-8, abs=1e-12)
    if abs(energy.det_slope(eq)) > 1e-3:
        assert energy.k1_det_threshold_closed_form(eq, D) == pytest.approx(
            energy.k1_det_threshold_bracketed(eq, D), rel=1e-8, abs=1e-12)


def test_determinant_is_affine_in_k1(eq, D):
    ks = np.array([-0.05, 0.01, 0.2, 1.0])
    dets = [np.linalg.det(energy.hessian_at_equilibrium(eq, D, k)) for k in ks]
    slopes = np.diff(dets) / np.diff(ks)
    np.testing.assert_allclose(slopes, energy.det_slope(eq), rtol=1e-9)
    h11 = [energy.hessian_at_equilibrium(eq, D, k)[0, 0] for k in ks]
    np.testing.assert_allclose(np.diff(h11) / np.diff(ks), 4 * eq.x1_star**2, rtol=1e-9)


def test_negative_slope_has_no_lower_bound():
    eq = Equilibrium(2.0, 1.0, 0.5)  # D = 1
    assert energy.det_slope(eq) < 0
    with pytest.raises(PreconditionError):
        energy.k1_double_prime(eq, 1.0)
    thr = energy.k1_det_threshold(eq, 1.0)
    assert np.linalg.det(energy.hessian_at_equilibrium(eq, 1.0, thr - 0.1)) > 0


def test_printed_bound_polynomial_disagrees_in_sign():
    # Near x2* = 0.1 the printed weight is positive while det(Hessian) falls with k1.
    x1s, x2s = 0.5, 0.1
    D = x1s / (1 + 1 / x2s)
    eq = equilibrium_for(x2s, D)
    assert energy.h_factor(eq) > 0
    d0, d1 = (np.linalg.det(energy.hessian_at_equilibrium(eq, D, k)) for k in (0.1, 0.2))
    assert d1 < d0
    assert energy.det_slope(eq) == pytest.approx((d1 - d0) / 0.1, rel=1e-8)
    assert energy.h_factor(Equilibrium(2.0, 1.0, 0.5)) == pytest.approx(-972.0)


def test_printed_first_bound_is_close(eq, D):
    printed = transcription.k1_prime(eq.x1_star, eq.x2_star, D)
    assert printed == pytest.approx(-0.12069276, abs=1e-7)
    assert abs(printed - ov.K1_PRIME) < 1e-3


def test_unassignable_equilibrium_rejected(D):
    with pytest.raises(PreconditionError):
        energy.k1_prime(Equilibrium(1.0, 4.0, 0.8), D)


def test_design_gains(eq, D):
    g = energy.design_gains(eq, D, K1)
    assert g.k2 == pytest.approx(ov.K2_AT_K1_001, rel=1e-13)
    assert g.k1_min == pytest.approx(ov.DET_THRESHOLD, rel=1e-11)
    with pytest.raises(PreconditionError):
        energy.design_gains(eq, D, -0.01)
    assert energy.design_gains(eq, D, -0.01, validate=False).k1 == -0.01


@settings(max_examples=100, deadline=None)
@given(x1=coord, x2=coord)
def test_damping_is_negative_definite(x1, x2):
    F = energy.f_d((x1, x2))
    assert np.all(np.linalg.eigvalsh(0.5 * (F + F.T)) < 0)


def test_off_quadrant_rejected(D, k2):
    for fn in (energy.hamiltonian, energy.grad, energy.hessian):
        with pytest.raises(DomainError):
            fn((-0.1, 1.0), D, K1, k2)
    with pytest.raises(DomainError):
        energy.f_d((1.0, 0.0))
