from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

import oracle_values as ov
from conftest import K1
from ida_buckboost import analysis, controllers, numdiff, transcription
from ida_buckboost.controllers import PdGains
from ida_buckboost.model import drift, equilibrium_for, input_vector
from ida_buckboost.verify import sample_points

PAPER_PD = PdGains(-0.4, -1.5)


@pytest.fixture(scope="module")
def halton():
    return sample_points(1000, seed=0, box=(0.1, 10.0))


def test_matching_identity(halton, D, k2):
    x = (halton[:, 0], halton[:, 1])
    u = controllers.ida_control(x, D, K1, k2)
    res = drift(x, D) + input_vector(x) * u - analysis.closed_loop_target(x, D, K1, k2)
    assert np.max(np.hypot(*res)) <= 1e-10


def test_control_at_equilibrium(eq, D, k2):
    assert controllers.ida_control(eq, D, K1, k2) == pytest.approx(eq.u_star, abs=1e-14)


def test_scalar_path_matches_vectorized(halton, D, k2):
    ref = controllers.ida_control((halton[:, 0], halton[:, 1]), D, K1, k2)
    fast = [controllers.ida_control_scalar(a, b, D, K1, k2) for a, b in halton]
    np.testing.assert_allclose(fast, ref, rtol=1e-13, atol=1e-13)


def test_corrected_closed_form_agrees(halton, D):
    eq = equilibrium_for(4.0, D)
    ref = controllers.ida_control((halton[:, 0], halton[:, 1]), D, K1, controllers.energy.compute_k2(eq, D, K1))
    alt = controllers.ida_control_closed_form((halton[:, 0], halton[:, 1]), D, K1, 4.0)
    assert np.max(np.abs(alt - ref)) <= 1e-9


def test_printed_closed_form_discrepancy_is_reported(halton, D):
    rep = transcription.discrepancy_report(halton, D, K1, 4.0)
    assert not rep.agrees
    assert rep.first_divergent.startswith("grad_x1")
    assert {c for c, v in rep.causes.items() if v > 1e-12} == {"k2", "inverse_tangent", "load_term_placement"}
    # Each correction on its own leaves the law wrong; together they fix it.
    for kind, inside in (("atanh", True), ("atan", False)):
        assert not transcription.discrepancy_report(halton, D, K1, 4.0, inverse_tangent=kind,
                                                    load_inside=inside).agrees
    assert transcription.discrepancy_report(halton, D, K1, 4.0, inverse_tangent="atanh", load_inside=False).agrees
    assert set(rep.to_dict()) == {"agrees", "max_abs_error", "worst_point", "first_divergent", "terms", "causes"}


def test_unknown_variant(D):
    with pytest.raises(ValueError):
        controllers.ida_control_closed_form((1.0, 1.0), D, K1, 4.0, transcription_variant="nope")


def test_pd_at_equilibrium(eq):
    assert controllers.pd_control(eq, eq, PAPER_PD) == eq.u_star


def test_pd_jacobian_matches_finite_differences(eq, D):
    def field(x):
        u = controllers.pd_control(x, eq, PAPER_PD)
        return drift(x, D) + input_vector(x) * u

    J_fd = numdiff.jacobian(field, [eq.x1_star, eq.x2_star])
    np.testing.assert_allclose(controllers.pd_jacobian(eq, D, PAPER_PD), J_fd, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(kp=st.floats(-3, 3), kd=st.floats(-5, 3))
def test_trace_and_determinant(kp, kd, eq, D):
    g = PdGains(kp, kd)
    J = controllers.pd_jacobian(eq, D, g)
    assert controllers.pd_trace(eq, D, g) == pytest.approx(np.trace(J), abs=1e-12)
    assert controllers.pd_det(eq, D, g) == pytest.approx(np.linalg.det(J), abs=1e-12)


def test_cone_paper_values(eq, D):
    cone = controllers.pd_stability_cone(eq, D)
    assert cone.m1 == pytest.approx(ov.PD_M1, abs=1e-12)
    assert abs(cone.m1 - 6.7358) < 1e-3
    assert cone.m2 == pytest.approx(ov.PD_M2, abs=1e-12)
    assert cone.b1 == pytest.approx(0.05, abs=1e-15)
    assert abs(cone.b1 - transcription.PD_CONE_B1_PRINTED) > 1e-3
    assert Fraction(1, (1 + 4) ** 2) == Fraction(1, 25)
    assert cone.b2 == 0.04


def test_cone_unit_case():
    cone = controllers.pd_stability_cone(equilibrium_for(1.0, 1.0), 1.0)
    assert (cone.m1, cone.b1, cone.m2, cone.b2) == (1.0, 0.5, 1.0, 0.25)


def test_paper_gains_hurwitz(eq, D):
    cone = controllers.pd_stability_cone(eq, D)
    assert controllers.pd_is_hurwitz(PAPER_PD, cone)
    assert np.all(np.linalg.eigvals(controllers.pd_jacobian(eq, D, PAPER_PD)).real < 0)


def test_cone_boundary_is_not_stable(eq, D):
    cone = controllers.pd_stability_cone(eq, D)
    kp = -0.4
    assert not controllers.pd_is_hurwitz(PdGains(kp, cone.m1 * kp + cone.b1), cone)
    assert not controllers.pd_is_hurwitz(PdGains(kp, cone.m2 * kp + cone.b2), cone)


@settings(max_examples=300, deadline=None)
@given(kp=st.floats(-3, 3), kd=st.floats(-6, 3), x2s=st.floats(0.3, 8), D=st.floats(0.05, 3))
def test_cone_equals_eigenvalue_test(kp, kd, x2s, D):
    eq = equilibrium_for(x2s, D)
    g = PdGains(kp, kd)
    lam = np.linalg.eigvals(controllers.pd_jacobian(eq, D, g))
    assume(np.min(np.abs(lam.real)) > 1e-7)
    assert controllers.pd_is_hurwitz(g, controllers.pd_stability_cone(eq, D)) == bool(np.all(lam.real < 0))
