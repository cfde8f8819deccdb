import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavity_forge import dynamics, memory
from cavity_forge.qcore import (
    InfeasibleTargetError,
    InvalidParameterError,
    PhotonWaveform,
    TimeGrid,
    WeakCouplingError,
    flux_integral,
    l2_norm,
    make_params,
    sin2_photon,
)


@pytest.fixture
def problem(fig13_params, fig13_photon):
    return memory.AbsorptionProblem(fig13_params, fig13_photon, 0.005)


@pytest.fixture
def matched_pulse(problem):
    return memory.synthesize_absorption_pulse(problem)


def _first_sign_change(values, times, after=0.0):
    s = np.sign(values)
    for i in range(1, len(values)):
        if times[i] > after and s[i - 1] != 0 and s[i] != 0 and s[i] != s[i - 1]:
            return times[i]
    return None


# -- input-output relation -----------------------------------------------------

def test_step_matrix():
    k = 2.0
    m = memory.inout_step_matrix(k)
    np.testing.assert_allclose(m, [[-k, 2.0], [2.0, -1.0]])
    with pytest.raises(InvalidParameterError):
        memory.inout_step_matrix(0.0)


def test_free_decay_of_empty_cavity():
    kappa = 2 * math.pi * 3e6
    grid = TimeGrid.spanning(0.0, 3e-6, 6001)
    traj = memory.empty_cavity_response(kappa, PhotonWaveform(grid, np.zeros(grid.n)), c_cav0=1.0)
    t = grid.times
    np.testing.assert_allclose(traj.c_g, np.exp(-kappa * t), atol=1e-9)
    np.testing.assert_allclose(traj.phi_out, math.sqrt(2 * kappa) * np.exp(-kappa * t),
                               rtol=1e-8, atol=1e-6)
    out = flux_integral(np.abs(traj.phi_out) ** 2, grid.dt)
    assert out == pytest.approx(1.0 - math.exp(-2 * kappa * 3e-6), abs=1e-9)


def test_steady_resonant_drive_is_fully_reflected():
    kappa = 2 * math.pi * 3e6
    grid = TimeGrid.spanning(0.0, 4e-6, 4001)
    t = grid.times
    # smooth switch-on, then constant amplitude
    ramp = np.where(t < 0.5e-6, np.sin(np.pi * t / 1e-6) ** 2, 1.0)
    amp = 100.0 * ramp
    traj = memory.empty_cavity_response(kappa, PhotonWaveform(grid, amp))
    late = t > 3e-6
    np.testing.assert_allclose(np.abs(traj.phi_out[late]), amp[late], rtol=1e-6)
    # steady state: phi_out = +phi_in (sqrt(2k) c = 2 phi_in)
    np.testing.assert_allclose(traj.phi_out[late].real, amp[late], rtol=1e-6)


def test_empty_cavity_conserves_photon(fig13_params, fig13_photon):
    traj = memory.empty_cavity_response(fig13_params.kappa, fig13_photon)
    dt = fig13_photon.grid.dt
    out = flux_integral(np.abs(traj.phi_out) ** 2, dt)
    left = abs(traj.c_g[-1]) ** 2
    assert out + left == pytest.approx(l2_norm(fig13_photon), abs=1e-9)


# -- the three storage scenarios -----------------------------------------------

def test_empty_cavity_reflects_everything_with_phase_flip(fig13_params, fig13_photon):
    traj = memory.empty_cavity_response(fig13_params.kappa, fig13_photon)
    out = flux_integral(np.abs(traj.phi_out) ** 2, fig13_photon.grid.dt)
    assert out == pytest.approx(1.0, abs=1e-6)
    t_flip = _first_sign_change(traj.phi_out.real, fig13_photon.times, after=1e-9)
    assert t_flip == pytest.approx(0.13e-6, abs=0.02e-6)


def test_ground_state_atom_reflects_half_percent(problem, matched_pulse):
    res = memory.run_absorption(problem, matched_pulse, initial_c_e=0.0)
    assert res.p_reflected == pytest.approx(0.005, abs=0.001)


def test_matched_absorption_reflects_nothing(problem, matched_pulse):
    res = memory.run_absorption(problem, matched_pulse)
    assert res.p_reflected < 1e-10
    assert abs(res.bookkeeping_error) < 1e-6
    assert res.p_stored > 0.9


def test_matched_amplitudes_identities(problem):
    m = memory.matched_amplitudes(problem)
    k = problem.params.kappa
    np.testing.assert_allclose(m.c_g, problem.phi_in.amp / math.sqrt(2 * k), atol=1e-15)
    assert np.max(np.abs(m.c_x.real)) < 1e-12
    assert np.max(np.abs(m.c_e.imag)) < 1e-12
    assert m.c_e[0] == pytest.approx(math.sqrt(problem.c0_sq))
    res = memory.run_absorption(problem, m.pulse)
    np.testing.assert_allclose(res.traj.c_e, m.c_e, atol=1e-6)


def test_lossless_long_photon_is_stored_almost_completely():
    params = make_params(15, 3, 0)
    grid = TimeGrid.spanning(0.0, 4e-6, 8001)
    photon = sin2_photon(grid, 3.5e-6, norm=0.99)
    p = memory.AbsorptionProblem(params, photon, 0.01)
    res = memory.run_absorption(p, memory.synthesize_absorption_pulse(p))
    assert res.p_reflected < 1e-10
    assert res.p_stored == pytest.approx(1.0, abs=1e-4)


# -- errors --------------------------------------------------------------------

def test_weak_coupling_raises(fig13_photon):
    params = make_params(math.sqrt(2 * 0.4 * 3 * 3), 3, 3)  # C = 0.4
    with pytest.raises(WeakCouplingError, match="C > 1/2"):
        memory.synthesize_absorption_pulse(memory.AbsorptionProblem(params, fig13_photon))


def test_zero_initial_population_is_infeasible(fig13_params, fig13_photon):
    p = memory.AbsorptionProblem(fig13_params, fig13_photon, 0.0)
    with pytest.raises(InfeasibleTargetError, match="c0_sq"):
        memory.synthesize_absorption_pulse(p)


@pytest.mark.parametrize("c0", [-0.1, 1.0, 2.0])
def test_initial_population_range(fig13_params, fig13_photon, c0):
    with pytest.raises(InvalidParameterError):
        memory.AbsorptionProblem(fig13_params, fig13_photon, c0)


def test_abrupt_photon_rejected(fig13_params, fig13_grid):
    t = fig13_grid.times
    amp = np.where((t > 1e-6) & (t < 2e-6), 700.0, 0.0)
    with pytest.raises(InvalidParameterError, match="smoothly"):
        memory.AbsorptionProblem(fig13_params, PhotonWaveform(fig13_grid, amp))


def test_short_photon_warns(fig13_params):
    grid = TimeGrid.spanning(0.0, 0.2e-6, 2001)
    photon = sin2_photon(grid, 0.04e-6, t0=0.01e-6, norm=0.5)
    p = memory.AbsorptionProblem(fig13_params, photon, 0.005)
    with pytest.warns(RuntimeWarning, match="build-up"):
        try:
            memory.synthesize_absorption_pulse(p)
        except InfeasibleTargetError:
            pass


# -- sweeps --------------------------------------------------------------------

def test_sweep_rows(fig13_photon):
    kappa = gamma = 2 * math.pi * 3e6
    rows = memory.efficiency_sweep(kappa, gamma, fig13_photon, [0.4, 5.0, 50.0], threads=2)
    bad, mid, big = rows
    assert not bad.feasible and math.isnan(bad.p_stored) and "C > 1/2" in bad.message
    assert mid.feasible and abs(mid.p_stored - 10 / 11) < 0.02
    assert big.feasible and abs(big.p_stored - big.optimum) < 0.02
    for r in (mid, big):
        assert r.p_reflected < 1e-6


def test_sweep_is_thread_count_independent(fig13_photon, monkeypatch):
    kappa = gamma = 2 * math.pi * 3e6
    Cs = [1.0, 3.0]
    monkeypatch.setenv("CAVITY_FORGE_THREADS", "1")
    a = memory.efficiency_sweep(kappa, gamma, fig13_photon, Cs)
    b = memory.efficiency_sweep(kappa, gamma, fig13_photon, Cs, threads=2)
    assert [r.p_stored for r in a] == [r.p_stored for r in b]


def test_bad_thread_env(fig13_photon, monkeypatch):
    monkeypatch.setenv("CAVITY_FORGE_THREADS", "many")
    with pytest.raises(InvalidParameterError):
        memory.efficiency_sweep(1e7, 1e7, fig13_photon, [1.0, 2.0])


def test_sweep_needs_losses(fig13_photon):
    with pytest.raises(InvalidParameterError):
        memory.efficiency_sweep(1e7, 0.0, fig13_photon, [1.0])


def test_efficiency_falls_towards_threshold(fig13_photon):
    kappa = gamma = 2 * math.pi * 3e6
    rows = memory.efficiency_sweep(kappa, gamma, fig13_photon, [0.55, 0.7, 1.0, 2.0])
    eff = [r.p_stored for r in rows]
    assert all(a < b for a, b in zip(eff, eff[1:]))
    assert eff[0] < 0.1


def test_cooperativity_grid():
    c = memory.cooperativity_grid(0.6, 50, 5)
    assert c[0] == pytest.approx(0.6) and c[-1] == pytest.approx(50)
    assert np.allclose(np.diff(np.log(c)), np.log(c[1] / c[0]))


# -- time reversal -------------------------------------------------------------

@pytest.fixture
def reversal_setup():
    params = make_params(15, 2, 0)
    grid = TimeGrid.spanning(0.0, 600e-9, 6001)
    photon = sin2_photon(grid, 500e-9, t0=50e-9, norm=0.95)
    return params, photon


def test_absorption_is_mirror_image_of_emission(reversal_setup):
    tr = memory.time_reversal_check(*reversal_setup)
    assert tr.max_deviation < 1e-3
    assert tr.c0_sq == pytest.approx(0.05, abs=1e-3)


def test_emission_pulse_itself_is_not_symmetric(reversal_setup):
    tr = memory.time_reversal_check(*reversal_setup)
    om = tr.omega_abs.omega
    assert not np.allclose(om, om[::-1], rtol=1e-2)


def test_reversal_deviation_grows_with_loss(reversal_setup):
    _, photon = reversal_setup
    devs = [memory.time_reversal_check(make_params(15, 2, gam), photon).max_deviation
            for gam in (0.05, 0.1, 0.2)]
    assert devs[0] < devs[1] < devs[2]


# -- properties ----------------------------------------------------------------

def test_reflection_translation_invariant(fig13_params):
    grid = TimeGrid.spanning(0.0, 4e-6, 8001)
    refl = []
    for t0 in (0.0, 0.4e-6):
        photon = sin2_photon(grid, 3.0e-6, t0=t0)
        p = memory.AbsorptionProblem(fig13_params, photon, 0.005)
        res = memory.run_absorption(p, memory.synthesize_absorption_pulse(p), initial_c_e=0.0)
        refl.append(res.p_reflected)
    assert refl[0] == pytest.approx(refl[1], rel=1e-6)


@settings(max_examples=12)
@given(C=st.floats(0.8, 20), c0=st.floats(0.003, 0.05), mismatch=st.booleans())
def test_absorption_bookkeeping(C, c0, mismatch):
    kappa = gamma = 2 * math.pi * 3e6
    g = math.sqrt(2 * C * kappa * gamma)
    params = make_params(g / (2 * math.pi * 1e6), 3, 3)
    grid = TimeGrid.spanning(0.0, 4e-6, 8001)
    photon = sin2_photon(grid, 3.14e-6)
    p = memory.AbsorptionProblem(params, photon, c0)
    pulse = memory.synthesize_absorption_pulse(p)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = memory.run_absorption(p, pulse, initial_c_e=0.0 if mismatch else None)
    assert abs(res.bookkeeping_error) < 1e-6
    defect = dynamics.bookkeeping_defect(params, res.traj, res.c0_sq, phi_in=photon)
    assert np.max(np.abs(defect)) < 1e-6
