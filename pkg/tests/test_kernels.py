import numpy as np
import pytest

from sandwichpde.kernels import (kernel_residual, solve_controller_kernels, solve_observer_kernels,
                                 derive_barM_barN)
from sandwichpde.model import SandwichParams


def test_zero_kernels_have_zero_residual():
    P = SandwichParams(A0=-1, B0=1, C0=1, E0=0, A1=-1, B1=0, C1=1, q1=1, q2=1, c1=0, c2=0,
                       p=0.0, q=0.5, tau=0.1)
    ok = solve_observer_kernels(P, 0.0, 20)
    assert np.all(ok.psi.values == 0) and np.all(ok.phi.values == 0)
    assert kernel_residual(P, ok=ok, L0=0.0).worst() == 0.0


def test_boundary_traces(params, gains, obs_kernels, ctrl_kernels):
    q1, q2 = params.q1, params.q2
    ok, ck = obs_kernels, ctrl_kernels
    np.testing.assert_allclose(ok.psi.diag(), params.c2 / (q1 + q2), rtol=1e-12)
    np.testing.assert_allclose(ck.J3.diag(), params.c1 / (q1 + q2), rtol=1e-12)
    np.testing.assert_allclose(ck.K2.diag(), -params.c2 / (q1 + q2), rtol=1e-12)
    assert q1 * ok.K1.values[0, 0] == pytest.approx(gains.L0, rel=1e-12)
    assert ck.gamma.values[-1, 0] == pytest.approx(-gains.F1, rel=1e-12)
    lam_end = params.q * ck.gamma.values[-1, 0] + params.C1[0, 0]
    assert ck.lam.values[-1, 0] == pytest.approx(lam_end, rel=1e-12)


def test_residuals_shrink_with_grid(params, gains):
    worst = []
    for N in (50, 100, 200):
        ok = solve_observer_kernels(params, gains.L0, N)
        derive_barM_barN(ok, params.c1)
        ck = solve_controller_kernels(params, gains.F1, N)
        rep = kernel_residual(params, ok=ok, ck=ck, L0=gains.L0, F1=gains.F1)
        worst.append(rep.residuals)
    for key in worst[0]:
        if "pde" in key:
            assert worst[0][key] > worst[1][key] > worst[2][key], key


def test_picard_iteration_contracts(obs_kernels, ctrl_kernels):
    h = obs_kernels.history
    assert len(h) >= 3 and h[-1] < h[-2] < h[-3]
    for hist in ctrl_kernels.history.values():
        if len(hist) >= 3:
            assert hist[-1] < hist[-2] < hist[-3]


def test_perturbed_kernel_is_flagged(params, gains, obs_kernels):
    ok = solve_observer_kernels(params, gains.L0, 100)
    clean = kernel_residual(params, ok=ok, L0=gains.L0).residuals
    ok.psi.values[40, 60] += 0.1
    bad = kernel_residual(params, ok=ok, L0=gains.L0).residuals
    assert bad["psi_pde"] > 100 * clean["psi_pde"]


def test_kernels_finite(obs_kernels, ctrl_kernels):
    for k in (obs_kernels.psi, obs_kernels.phi, obs_kernels.K1, ctrl_kernels.K3, ctrl_kernels.J3,
              ctrl_kernels.K2, ctrl_kernels.J2, ctrl_kernels.gamma, ctrl_kernels.lam):
        assert np.all(np.isfinite(k.values))


def test_interpolation_hits_nodes(obs_kernels):
    g = obs_kernels.psi.grid
    assert obs_kernels.psi(g[10], g[70]) == pytest.approx(obs_kernels.psi.values[10, 70])
