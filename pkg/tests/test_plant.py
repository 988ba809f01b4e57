import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sandwichpde.model import SandwichParams, riemann_inverse
from sandwichpde.plant import (DisturbanceState, current_profile, drag_force, energy, init_plant,
                               measure, payload_drag, step_disturbance, step_plant)


def lossless(p=1.0, q=1.0, A1=0.0, C1=0.0, m=1):
    return SandwichParams(A0=-1, B0=0, C0=0, E0=0, A1=A1, B1=np.zeros(m), C1=C1, q1=1.0, q2=1.0,
                          c1=0.0, c2=0.0, p=p, q=q, tau=0.1)


@pytest.mark.parametrize("scheme", ["semi_lagrangian", "upwind"])
def test_zero_state_stays_zero(params, scheme):
    st = init_plant(params, 200, 1e-3, scheme=scheme)
    for _ in range(50):
        st = step_plant(st, 0.0, None, 0.0, 1e-3)
    assert not np.any(st.z) and not np.any(st.w) and not np.any(st.X) and not np.any(st.Y)


@pytest.mark.parametrize("scheme,M,dt", [("semi_lagrangian", 1000, 0.0025), ("upwind", 400, 0.0025)])
def test_lossless_transport_conserves_norm(scheme, M, dt):
    P = lossless()
    st = init_plant(P, M, dt, z0=lambda x: np.sin(np.pi * x) ** 2,
                    w0=lambda x: np.sin(np.pi * x) ** 2 * np.cos(np.pi * x),
                    scheme=scheme)
    norm = lambda s: np.trapezoid(s.z**2, s.grid) + np.trapezoid(s.w**2, s.grid)
    e0 = norm(st)
    for _ in range(int(round(1.0 / dt))):
        st = step_plant(st, 0.0, None, 0.0, dt)
    assert abs(norm(st) / e0 - 1.0) <= 5e-3


def test_measure_zero_before_delay(params):
    st = init_plant(params, 100, 1e-3, Y0=[1.0])
    for _ in range(100):
        assert measure(st) == (0.0, 0.0)
        st = step_plant(st, 0.0, None, 0.0, 1e-3)
    assert measure(st)[0] == pytest.approx(float(params.C1[0, 0]))


def test_constant_output_after_delay():
    P = lossless(C1=2.0)
    st = init_plant(P, 50, 1e-3, Y0=[0.7])
    for _ in range(150):
        st = step_plant(st, 0.0, None, 0.0, 1e-3)
    assert measure(st)[0] == pytest.approx(1.4, abs=1e-12)


def test_delay_is_sample_exact():
    w = 3.0
    P = lossless(A1=np.array([[0.0, w], [-w, 0.0]]), C1=np.array([[1.0, 0.0]]), m=2)
    dt = 1e-3
    st = init_plant(P, 50, dt, Y0=[1.0, 0.0])
    outs, truth = [], []
    for _ in range(2000):
        truth.append(float((P.C1 @ st.Y)[0]))
        outs.append(measure(st)[0])
        st = step_plant(st, 0.0, None, 0.0, dt)
    outs, truth = np.array(outs), np.array(truth)
    k = int(round(P.tau / dt))
    np.testing.assert_allclose(outs[k:], truth[:-k], rtol=0, atol=1e-12)
    xc = [np.corrcoef(outs[500:1500], truth[500 - lag:1500 - lag])[0, 1] for lag in range(0, 300)]
    assert int(np.argmax(xc)) == k


def test_energy_forms(dcv):
    P = lossless()
    st = init_plant(P, 100, 1e-3, length=dcv.L)
    assert energy(st, dcv.rho) == 0.0
    st.z[:] = 1.5
    st.w[:] = 1.5
    assert energy(st, dcv.rho) == pytest.approx(dcv.rho / 8 * dcv.L * 3.0**2, rel=1e-12)
    rng = np.random.default_rng(3)
    st.z[:] = rng.normal(size=101)
    st.w[:] = rng.normal(size=101)
    ut, ux = riemann_inverse(st.z, st.w, dcv.wave_speed)
    x = st.grid * dcv.L
    alt = 0.5 * dcv.rho * np.trapezoid(ut**2, x) + 0.5 * dcv.T0 * np.trapezoid(ux**2, x)
    assert energy(st, dcv.rho) == pytest.approx(alt, rel=1e-10)


def test_drag_force_at_surface(dcv):
    ds = DisturbanceState(dcv=dcv)
    t = 0.37
    f = drag_force(ds, np.array([0.0]), t, 2.0)[0]
    amp = 0.5 * 1024 * 1 * 4 * 0.2 * 400
    assert f == pytest.approx(amp * np.cos(4 * np.pi * 0.2 * 2 / 0.2 * t + np.pi), rel=1e-12)


def test_current_profile_continuous():
    assert current_profile(np.array([300.0]), 2.0)[0] == pytest.approx(2.0)
    assert current_profile(np.array([300.0 + 1e-9]), 2.0)[0] == pytest.approx(2.0, rel=1e-9)
    assert current_profile(np.array([1000.0]), 2.0)[0] == pytest.approx(0.2, rel=1e-12)


@pytest.mark.parametrize("P", [-1.7, 2.2])
def test_payload_drag(dcv, P):
    ds = DisturbanceState(dcv=dcv)
    fL = payload_drag(ds, P)
    assert np.sign(fL) == np.sign(P)
    assert abs(fL) == pytest.approx(0.5 * 1 * 1024 * 10 * 5 * P**2, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 5.0))
def test_current_speed_stays_in_band(seed, sigma):
    ds = DisturbanceState(seed=seed, sigma=sigma)
    for _ in range(500):
        ds, _, _ = step_disturbance(ds, 1e-2)
        assert 1.6 <= ds.P <= 2.4


def test_disabled_disturbance_is_silent():
    ds = DisturbanceState(enabled=False, x_phys=np.linspace(0, 1000, 11))
    ds, f, fL = step_disturbance(ds, 1e-3)
    assert not np.any(f) and fL == 0.0


def test_upwind_rejects_large_courant(params):
    with pytest.raises(ValueError):
        init_plant(params, 10000, 1e-3, scheme="upwind")


def test_delay_must_be_whole_steps(params):
    with pytest.raises(ValueError):
        init_plant(params, 100, 3e-2)
