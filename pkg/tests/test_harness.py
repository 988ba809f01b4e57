import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sandwichpde.cli import main
from sandwichpde.controller import SynthesisError
from sandwichpde.harness import (EXIT_ASSUMPTION, EXIT_DIVERGENCE, EXIT_SYNTHESIS, AssumptionError,
                                 DivergenceError, ScenarioConfig, SimulationTrace, compare_runs,
                                 envelope, exit_code_for, fit_decay_rate, run_scenario)


def test_fit_recovers_exponential():
    t = np.linspace(0, 5, 200)
    lam, r2 = fit_decay_rate(t, np.exp(-2 * t))
    assert lam == pytest.approx(2.0, rel=1e-12) and r2 == pytest.approx(1.0)


def test_fit_constant_series():
    lam, r2 = fit_decay_rate(np.full(50, 3.0))
    assert lam == pytest.approx(0.0, abs=1e-12)


def test_fit_window_and_errors():
    t = np.linspace(0, 10, 101)
    y = np.where(t < 2, 1.0, np.exp(-0.5 * t))
    assert fit_decay_rate(t, y, t0=2.0)[0] == pytest.approx(0.5, rel=1e-10)
    with pytest.raises(ValueError):
        fit_decay_rate(t, y - 0.5)


def test_envelope_is_running_max():
    y = np.array([1.0, -3.0, 2.0, 0.5, -0.1])
    np.testing.assert_array_equal(envelope(y, 2), [3.0, 3.0, 2.0, 0.5, 0.1])


def _trace(E, seed=1, bL=None, t=None):
    t = np.arange(len(E), dtype=float) if t is None else t
    bL = np.zeros(len(E)) if bL is None else bL
    return SimulationTrace(data={"t": t, "energy": np.asarray(E, float), "bL": bL}, seed=seed,
                           mode="closed_loop", dt=1.0)


def test_identical_traces_do_not_cross():
    E = np.linspace(5, 1, 20)
    c = compare_runs(_trace(E), _trace(E))
    assert np.all(c.ratio == 1.0) and c.crossing_time is None


def test_half_amplitude_quarter_energy():
    E = np.linspace(5, 1, 20)
    c = compare_runs(_trace(0.25 * E), _trace(E))
    np.testing.assert_allclose(c.ratio, 0.25)
    assert c.crossing_time == 0.0


def test_crossing_time_and_deltas():
    Eb = np.ones(10)
    Ea = np.array([2, 2, 2, 1.5, 0.9, 0.8, 1.2, 0.5, 0.5, 0.5])
    c = compare_runs(_trace(Ea, bL=np.full(10, -1.0)), _trace(Eb, bL=np.full(10, -4.0)))
    assert c.crossing_time == 4.0
    assert c.bL_delta == pytest.approx(3.0) and c.final_ratio == pytest.approx(0.5)


def test_paired_seed_discipline():
    with pytest.raises(ValueError):
        compare_runs(_trace(np.ones(5), seed=1), _trace(np.ones(5), seed=2))
    with pytest.raises(ValueError):
        compare_runs(_trace(np.ones(5)), _trace(np.ones(5), t=np.arange(5) * 2.0))


names = st.sampled_from(["closed_loop", "observer_only", "uncontrolled"])


@settings(max_examples=50, deadline=None)
@given(mode=names, horizon=st.floats(0.1, 100), A_D=st.floats(0, 5000), seed=st.integers(0, 2**31),
       F1=st.floats(-100, 100), M=st.integers(10, 20000), disturbance=st.booleans(),
       out=st.text("abcxyz/_", max_size=12))
def test_config_round_trip(mode, horizon, A_D, seed, F1, M, disturbance, out):
    cfg = ScenarioConfig(mode=mode, horizon=horizon, A_D=A_D, seed=seed, F1=F1, M=M,
                         disturbance=disturbance, out_dir=out)
    assert ScenarioConfig.from_ini(cfg.to_ini()) == cfg


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(tau=0.1005)
    with pytest.raises(ValueError):
        ScenarioConfig(horizon=0.0)
    with pytest.raises(ValueError):
        ScenarioConfig(mode="bogus")
    with pytest.raises(ValueError):
        ScenarioConfig.from_ini("[run]\nnonsense = 1\n")


def test_config_file_round_trip(tmp_path):
    cfg = ScenarioConfig(seed=9, A_D=1200.0)
    cfg.save(tmp_path / "c.ini")
    assert ScenarioConfig.load(tmp_path / "c.ini") == cfg


def test_runs_are_bit_identical(tmp_path):
    cfg = ScenarioConfig(horizon=0.3, M=1000, seed=4)
    for sub in ("a", "b"):
        run_scenario(cfg.replace(out_dir=str(tmp_path / sub)))
    a = (tmp_path / "a" / "closed_loop_seed4.csv").read_bytes()
    b = (tmp_path / "b" / "closed_loop_seed4.csv").read_bytes()
    assert a == b
    head = a.decode().splitlines()[:3]
    assert "seed=4" in head[1] and head[2].startswith("t [s],")
    assert (tmp_path / "a" / "closed_loop_seed4_summary.csv").exists()
    assert ScenarioConfig.load(tmp_path / "a" / "closed_loop_seed4.ini") == cfg.replace(out_dir=str(tmp_path / "a"))


def test_assumption_failure_is_reported():
    with pytest.raises(AssumptionError) as ei:
        run_scenario(ScenarioConfig(L1=-0.3, horizon=0.1, M=1000))
    assert "A1bar_hurwitz" in ei.value.report.failures()


def test_exit_codes():
    assert exit_code_for(SynthesisError("x")) == EXIT_SYNTHESIS
    assert exit_code_for(DivergenceError("plant", 1.0, "nan")) == EXIT_DIVERGENCE
    with pytest.raises(KeyError):
        exit_code_for(KeyError("other"))


def test_cli_run(tmp_path, capsys):
    rc = main(["run", "--mode", "observer_only", "--no-disturbance", "--horizon", "0.2",
               "--out", str(tmp_path)])
    assert rc == 0
    assert "err_decay_rate" in capsys.readouterr().out
    assert (tmp_path / "observer_only.csv").exists()


def test_cli_assumption_exit(tmp_path, capsys):
    cfg = ScenarioConfig(L1=-0.3, horizon=0.1)
    cfg.save(tmp_path / "bad.ini")
    assert main(["run", "--config", str(tmp_path / "bad.ini")]) == EXIT_ASSUMPTION
    assert "A1bar_hurwitz" in capsys.readouterr().err


def test_cli_audits(capsys):
    assert main(["audit-synthesis"]) == 0
    assert "realization_max_rel_err" in capsys.readouterr().out
    assert main(["audit-kernels", "--N", "40"]) == 0
    assert "min_ratio" in capsys.readouterr().out


def test_cli_sweep(tmp_path, capsys):
    assert main(["sweep", "--seeds", "3", "--horizon", "0.3", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[1].split()[0] == "3"
    assert (tmp_path / "sweep.csv").exists()
