import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sandwichpde.model import (DcvPhysicalParams, GainSet, SandwichParams, check_assumptions,
                               derive_sandwich_from_dcv, dcv_default_gains, is_hurwitz,
                               observer_A1bar, riemann_forward, riemann_inverse)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_riemann_examples():
    z, w = riemann_forward(np.full(5, 2.0), np.zeros(5), 493.0)
    assert np.all(z == 2.0) and np.all(w == 2.0)
    z, w = riemann_forward(np.zeros(5), np.ones(5), 493.0)
    assert np.all(z == -493.0) and np.all(w == 493.0)
    ut, ux = riemann_inverse(np.full(3, 2.0), np.full(3, 2.0), 10.0)
    assert np.all(ut == 2.0) and np.all(ux == 0.0)
    a = np.linspace(-1, 1, 7)
    assert np.all(riemann_inverse(-a, a, 3.0)[0] == 0.0)


def test_initial_velocity_profile():
    x = np.linspace(0, 1, 11)
    ut, _ = riemann_inverse(4 * np.sin(np.pi * x), 4 * np.cos(np.pi * x), 493.0)
    np.testing.assert_allclose(ut, 2 * np.sin(np.pi * x) + 2 * np.cos(np.pi * x), rtol=0, atol=1e-14)


def test_riemann_errors():
    with pytest.raises(ValueError):
        riemann_forward(np.zeros(3), np.zeros(4), 1.0)
    with pytest.raises(ValueError):
        riemann_inverse(np.zeros(3), np.zeros(3), 0.0)


@given(arrays(float, 16, elements=finite), arrays(float, 16, elements=finite),
       st.floats(0.1, 1e3))
def test_riemann_round_trip(ut, ux, v):
    z, w = riemann_forward(ut, ux, v)
    a, b = riemann_inverse(z, w, v)
    scale = max(1.0, np.abs(ut).max(), np.abs(ux).max())
    assert np.abs(a - ut).max() <= 1e-12 * scale * v
    assert np.abs(b - ux).max() <= 1e-12 * scale * max(v, 1.0)


def test_dcv_mapping(dcv, params):
    assert dcv.T0 > 0
    assert params.p == -1 and params.q == -1
    assert params.C0[0, 0] == 2 and params.C1[0, 0] == 2
    assert params.q1 == pytest.approx(dcv.wave_speed / dcv.L)
    assert dcv.wave_speed == pytest.approx(493.0, rel=2e-3)
    assert abs(params.p * params.q) < params.reflection_bound


def test_buoyant_payload_rejected():
    with pytest.raises(ValueError):
        derive_sandwich_from_dcv(DcvPhysicalParams(ML=1e5))
    with pytest.raises(ValueError):
        DcvPhysicalParams(L=-1.0)


def test_default_gains_pass(params):
    rep = check_assumptions(params, dcv_default_gains())
    assert rep.ok, rep.failures()


def test_negative_L1_fails_observer_hurwitz(params):
    g = dcv_default_gains()
    rep = check_assumptions(params, GainSet(L0=g.L0, L1=-0.3, F0=g.F0, F1=g.F1))
    assert "A1bar_hurwitz" in rep.failures()


def test_scalar_system_without_zeros():
    P = SandwichParams(A0=-1, B0=1, C0=1, E0=0, A1=-1, B1=1, C1=1, q1=1, q2=1, c1=0, c2=0,
                       p=0.5, q=0.5, tau=0.1)
    rep = check_assumptions(P, GainSet(L0=0.0, L1=0.0, F0=0.0, F1=0.0))
    assert rep.checks["proximal_zeros"]


@settings(max_examples=40, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_hurwitz_matches_scalar_bounds(L0, L1):
    # the observer matrices are scalar here: Hurwitz exactly when the scalar bound holds
    dcv = DcvPhysicalParams()
    P = derive_sandwich_from_dcv(dcv)
    a0 = float(P.A0[0, 0] - L0 * P.C0[0, 0])
    a1 = float(observer_A1bar(P, np.atleast_2d(L1))[0, 0])
    if abs(a0) > 1e-9:
        assert is_hurwitz(P.A0 - np.atleast_2d(L0) @ P.C0) == (a0 < 0)
    if abs(a1) > 1e-9:
        assert is_hurwitz(observer_A1bar(P, np.atleast_2d(L1))) == (a1 < 0)
