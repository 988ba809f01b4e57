import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sandwichpde.harness import ScenarioConfig, run_scenario
from sandwichpde.observer import (build_injection_filters, dcv_injection_gains,
                                  error_norm, init_observer, observer_identity_residuals, r_closed_form_dcv,
                                  r_of_s, realize_gains, step_observer, target_error_residual,
                                  transform_errors)
from sandwichpde.plant import dcv_initial_data, init_plant

from conftest import smooth


@pytest.fixture(scope="module")
def bank(params, gains, obs_kernels):
    return build_injection_filters(params, gains, obs_kernels)


def test_r_at_zero_matches_closed_form(dcv, params, gains):
    r0 = r_of_s(params, gains.L1, 0.0)[0].real
    assert r0 == pytest.approx(r_closed_form_dcv(dcv, 0.1), rel=1e-10)


def test_r_nonzero_on_imaginary_axis(params, gains):
    w = np.logspace(-4, 4, 2000)
    assert np.min(np.abs(r_of_s(params, gains.L1, 1j * w))) > 0


def test_crane_injections_are_pd(bank):
    # r(s) has one pole and no zero: 1/r is affine in s and no filter core remains
    assert bank.core_A.shape == (0, 0)
    assert bank.poles.size == 0


def test_two_routes_give_same_injections(dcv, params, gains, obs_kernels, bank):
    ok = obs_kernels
    phi1 = np.array([ok.phi(x, 1.0) for x in bank.xz])
    psi1 = np.array([ok.psi(x, 1.0) for x in bank.xz])
    closed = dcv_injection_gains(dcv, 0.1, params.q, ok.K1.values[-1, 0], phi1, psi1, bank.xv)
    rng = np.random.default_rng(7)
    y, yd = rng.normal(size=200), rng.normal(size=200)
    for name, (a, b) in closed.items():
        Dg = np.asarray(bank.D[name], float).reshape(-1)
        Pg = np.asarray(bank.P[name], float).reshape(-1)
        a = np.asarray(a, float).reshape(-1)
        b = np.asarray(b, float).reshape(-1)
        sig_gen = np.outer(yd, Dg) + np.outer(y, Pg)
        sig_cf = np.outer(yd, a) + np.outer(y, b)
        scale = max(1.0, np.abs(sig_cf).max())
        assert np.abs(sig_gen - sig_cf).max() <= 1e-9 * scale, name


def test_designed_delay_injection_is_singular(bank):
    # the exact design cancels the innovation at the output end; the causal
    # realization keeps only the proportional correction on the delay segment
    assert abs(bank.well_posed_index) < 1e-9
    g = realize_gains(bank, 100, 100, mode="delayed")
    assert not np.any(g.a5)
    assert np.all(g.b5 != 0)


def test_unknown_realization(bank):
    with pytest.raises(ValueError):
        realize_gains(bank, 100, 100, mode="bogus")


@settings(max_examples=30, deadline=None)
@given(arrays(float, 5, elements=st.floats(-3, 3)), st.floats(-5, 5))
def test_error_transformation_inverts(obs_kernels, coef, X):
    ok = obs_kernels
    x = ok.psi.grid
    alpha, _ = smooth(x, coef)
    h = 1.0 / ok.N
    zt = np.empty_like(alpha)
    for i in range(x.size):
        seg = ok.phi.values[i, i:] * alpha[i:]
        zt[i] = alpha[i] - (h * (seg.sum() - 0.5 * (seg[0] + seg[-1])) if seg.size > 1 else 0.0)
    a2, _, _ = transform_errors(ok, zt, np.zeros_like(zt), np.array([X]))
    np.testing.assert_allclose(a2, alpha, rtol=0, atol=1e-12 * max(1.0, np.abs(alpha).max()))


def test_identity_residuals_shrink(params, gains):
    from sandwichpde.kernels import solve_observer_kernels
    rng = np.random.default_rng(11)
    ca, cb = rng.normal(size=4), rng.normal(size=4)
    prev = None
    for N in (50, 100):
        ok = solve_observer_kernels(params, gains.L0, N)
        x = np.linspace(0, 1, N + 1)
        a, ax = smooth(x, ca)
        b, _ = smooth(x, cb)
        r = observer_identity_residuals(params, ok, gains, a, ax, b - b[-1], np.array([0.4]))
        assert max(r.values()) < 1e-2
        if prev is not None:
            for k in ("ztil_pde", "wtil_pde", "Z_ode"):
                assert r[k] < 0.5 * prev[k], k
        prev = r


def test_identical_states_have_zero_error(params, gains, obs_kernels, bank):
    g = realize_gains(bank, 200, 100)
    z0, w0, X0, Y0 = dcv_initial_data(params)
    plant = init_plant(params, 200, 1e-3, z0, w0, X0, Y0, scheme="upwind")
    obs = init_observer(params, g, 200, 1e-3, z0, w0, X0, Y0)
    assert error_norm(plant, obs) == 0.0
    assert all(v == 0.0 for v in target_error_residual(plant, obs, obs_kernels).values())


def test_exact_initialization_keeps_innovation_zero():
    cfg = ScenarioConfig(mode="observer_only", disturbance=False, exact_init=True, M=500,
                         scheme="upwind", horizon=2.0)
    _, s = run_scenario(cfg)
    assert s.max_innovation <= 1e-9


def test_observer_rejects_mismatched_step(params, bank):
    g = realize_gains(bank, 100, 100)
    obs = init_observer(params, g, 100, 1e-3)
    with pytest.raises(ValueError):
        step_observer(obs, 0.0, 0.0, 0.0, 2e-3)
