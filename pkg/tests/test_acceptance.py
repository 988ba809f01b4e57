"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and printed together at the end of the pytest
session (see conftest.py).  Running this file directly prints them too.
"""

import functools
import time

import numpy as np
import pytest

from sandwichpde.controller import build_realization, controller_identity_residuals
from sandwichpde.harness import ScenarioConfig, kernel_audit, run_scenario, sweep, synth_audit
from sandwichpde.kernels import derive_gain_integrals, solve_controller_kernels, solve_observer_kernels
from sandwichpde.model import derive_sandwich_from_dcv
from sandwichpde.observer import observer_identity_residuals, r_closed_form_dcv, r_of_s

SEEDS = tuple(range(1, 11))
THRESHOLD = 2.5
VERDICTS = {}


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[n] = line
    print(line)
    return ok


@functools.lru_cache(maxsize=None)
def noise_free_closed_loop(scheme="semi_lagrangian", M=10000):
    return run_scenario(ScenarioConfig(disturbance=False, scheme=scheme, M=M))


@functools.lru_cache(maxsize=None)
def seed_sweep(A_D, seeds):
    return sweep(ScenarioConfig(A_D=A_D), seeds)


def test_criterion_1_kernel_certification():
    s = kernel_audit(ScenarioConfig(kernel_N=100))
    e = s.extra
    ok = e["max_residual"] <= 5e-3 and e["min_ratio"] >= 1.7 and e["runtime_N"] <= 30.0
    assert report(1, ok, f"max residual {e['max_residual']:.2e} (<=5e-3), min refinement factor "
                         f"{e['min_ratio']:.2f} (>=1.7, {e['exact_count']} exact relations), "
                         f"solve {e['runtime_N']:.2f} s (<=30)")


def test_criterion_2_observer_convergence():
    _, s = run_scenario(ScenarioConfig(mode="observer_only", disturbance=False))
    _, se = run_scenario(ScenarioConfig(mode="observer_only", disturbance=False, exact_init=True,
                                        M=500, scheme="upwind"))
    lam, r2 = s.err_decay
    ok = lam > 0 and r2 >= 0.9 and se.max_innovation <= 1e-9 and s.runtime <= 60.0
    assert report(2, ok, f"error decay rate {lam:.4f} 1/s, r2 {r2:.3f} (>=0.9), exact-init innovation "
                         f"{se.max_innovation:.1e} (<=1e-9), runtime {s.runtime:.1f} s (<=60)")


def test_criterion_3_closed_loop_stabilization():
    _, s = noise_free_closed_loop()
    rates = {"U": s.U_decay[0], **{k: v[0] for k, v in s.state_decay.items()}}
    ok = all(np.isfinite(v) and v > 0 for v in rates.values()) and np.isfinite(s.max_abs_U)
    txt = ", ".join(f"{k} {v:.3f}" for k, v in rates.items())
    assert report(3, ok, f"fitted decay rates [{txt}] 1/s, max|U| {s.max_abs_U:.3e} N")


def test_criterion_4_placement_tolerance():
    rows = seed_sweep(400.0, SEEDS)
    ctrl = sum(abs(r["bL_controlled"]) <= THRESHOLD for r in rows)
    unc = sum(abs(r["bL_uncontrolled"]) > THRESHOLD for r in rows)
    bl = " ".join(f"{r['bL_controlled']:.2f}/{r['bL_uncontrolled']:.2f}" for r in rows)
    ok = ctrl >= 9 and unc >= 7
    assert report(4, ok, f"controlled within 2.5 m: {ctrl}/10 (>=9); uncontrolled beyond: {unc}/10 (>=7); "
                         f"bL(20) ctrl/unctrl per seed: {bl}")


def test_criterion_5_energy_crossing():
    rows = seed_sweep(400.0, SEEDS)
    hits = sum(r["crossing_time"] is not None and r["crossing_time"] <= 10.0 for r in rows)
    times = " ".join("none" if r["crossing_time"] is None else f"{r['crossing_time']:.2f}" for r in rows)
    assert report(5, hits >= 8, f"crossing <= 10 s in {hits}/10 seeds (>=8); times: {times}")


def test_criterion_6_disturbance_limit():
    row = seed_sweep(1200.0, (ScenarioConfig().seed,))[0]
    ct = row["crossing_time"]
    fails5 = ct is None or ct > 10.0
    assert report(6, fails5, f"A_D=1200 default seed crossing time {ct} s, final energy ratio "
                             f"{row['final_energy_ratio']:.4f} (must fail the <=10 s crossing)")


def test_criterion_7_synthesis_soundness():
    cfg = ScenarioConfig()
    s, fs = synth_audit(cfg)
    dcv = cfg.dcv
    P = derive_sandwich_from_dcv(dcv)
    r = r_of_s(P, cfg.gains.L1, 1j * fs.freqs)
    r0 = r_of_s(P, cfg.gains.L1, 0.0)[0].real
    r0_cf = r_closed_form_dcv(dcv, cfg.L1)
    rel0 = abs(r0 - r0_cf) / abs(r0_cf)
    err = s.extra["realization_max_rel_err"]
    ok = (fs.margin.size == 2000 and np.all(fs.margin > 0) and np.min(np.abs(r)) > 0
          and rel0 <= 1e-10 and err <= 1e-2)
    assert report(7, ok, f"min margin {fs.min_margin:.3e} over {fs.margin.size} freqs, min|r(jw)| "
                         f"{np.min(np.abs(r)):.3e}, r(0) rel err {rel0:.1e} (<=1e-10), realization err "
                         f"{err:.1e} (<=1e-2) below wc={fs.wc:g}")


def test_criterion_8_identity_suite():
    cfg = ScenarioConfig()
    P = derive_sandwich_from_dcv(cfg.dcv)
    G = cfg.gains
    rng = np.random.default_rng(2024)
    coefs = [rng.normal(size=5) for _ in range(4)]
    Y = np.array([rng.normal()])
    X = np.array([rng.normal()])
    results = {}
    for N in (50, 100, 200):
        x = np.linspace(0, 1, N + 1)
        k = np.arange(5)
        f = lambda c: (np.cos(np.pi * np.outer(x, k)) @ c, -(np.sin(np.pi * np.outer(x, k)) * np.pi * k) @ c)
        ok = solve_observer_kernels(P, G.L0, N)
        a, ax = f(coefs[0])
        b, _ = f(coefs[1])
        ro = observer_identity_residuals(P, ok, G, a, ax, b - b[-1], X)
        ck = derive_gain_integrals(P, solve_controller_kernels(P, G.F1, N), G.F0, G.F1)
        zh, zx = f(coefs[2])
        wh, wx = f(coefs[3])
        fix = P.q * zh[-1] + (P.C1 @ Y).item() - wh[-1]
        rc = controller_identity_residuals(P, ck, G.F0, zh, zx, wh + fix * x**2, wx + 2 * fix * x, Y, U=0.7)
        results[N] = {**{f"obs_{k}": v for k, v in ro.items()}, **{f"ctl_{k}": v for k, v in rc.items()}}
    bad = []
    for key in results[50]:
        r50, r100, r200 = (results[N][key] for N in (50, 100, 200))
        if r50 > 10.0 / 50 or r100 > 10.0 / 100 or r200 > 10.0 / 200:
            bad.append(key)
        elif r50 > 1e-12 and not (r200 < r100 < r50):
            bad.append(key)
    worst = max(results[200].values())
    assert report(8, not bad, f"{len(results[50])} identities, worst at N=200 {worst:.2e}, "
                              f"non-decreasing/too large: {bad or 'none'}")


def test_criterion_9_scheme_oracle():
    _, sl = noise_free_closed_loop()
    _, up = noise_free_closed_loop("upwind", 2000)
    rel = abs(sl.bL_final - up.bL_final) / abs(up.bL_final)
    assert report(9, rel <= 0.02, f"bL(20) semi-Lagrangian {sl.bL_final:.5f} m vs upwind "
                                  f"{up.bL_final:.5f} m, rel diff {rel:.2e} (<=2%)")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
